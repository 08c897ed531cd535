use std::net::SocketAddr;
use std::sync::Arc;

use crate::error::Result;
use crate::protocol::client::{Client, ClientConfig};
use crate::protocol::proxy::ProxyX;
use crate::protocol::server::ServerY;
use crate::protocol::transport::{
    spawn_tcp_service, Link, LoopbackChannel, LoopbackConnector, Service, TcpChannel, TcpConnector, Transcript,
};
use crate::she::SheKeys;

fn server_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_0f5e_7e7a_11ce
}

/// All three parties in one process, wired through recorded loopback
/// channels. Every run with the same keys and seed produces the same bytes.
pub struct Loopback {
    pub client: Client,
    pub server_y: Arc<ServerY>,
    pub proxy_x: Arc<ProxyX>,
    pub transcript: Transcript,
}

impl Loopback {
    pub fn new(keys: SheKeys, config: ClientConfig, seed: u64) -> Self {
        let transcript = Transcript::new();
        let proxy_x = Arc::new(ProxyX::new(None));
        let to_proxy =
            LoopbackConnector::new(proxy_x.clone() as Arc<dyn Service>, Link::YToX, Some(transcript.clone()));
        let server_y = Arc::new(ServerY::new(Box::new(to_proxy), Some(server_seed(seed)), None));
        let to_y = LoopbackChannel::new(server_y.clone() as Arc<dyn Service>, Link::ClientToY, Some(transcript.clone()));
        let to_x = LoopbackChannel::new(proxy_x.clone() as Arc<dyn Service>, Link::ClientToX, Some(transcript.clone()));
        let client = Client::new(keys, Box::new(to_y), Box::new(to_x), config, Some(seed));
        Self { client, server_y, proxy_x, transcript }
    }
}

pub fn loopback_transport(keys: SheKeys, config: ClientConfig, seed: u64) -> Loopback {
    Loopback::new(keys, config, seed)
}

/// The same deployment over real sockets on localhost. The server threads
/// live until the process exits.
pub struct TcpDeployment {
    pub client: Client,
    pub server_y: Arc<ServerY>,
    pub proxy_x: Arc<ProxyX>,
    pub transcript: Transcript,
    pub y_addr: SocketAddr,
    pub x_addr: SocketAddr,
}

impl TcpDeployment {
    pub fn start(keys: SheKeys, config: ClientConfig, seed: u64) -> Result<Self> {
        let transcript = Transcript::new();
        let proxy_x = Arc::new(ProxyX::new(None));
        let (x_addr, _) = spawn_tcp_service("127.0.0.1:0", proxy_x.clone())?;
        let to_proxy = TcpConnector::new(x_addr, Link::YToX, Some(transcript.clone()));
        let server_y = Arc::new(ServerY::new(Box::new(to_proxy), Some(server_seed(seed)), None));
        let (y_addr, _) = spawn_tcp_service("127.0.0.1:0", server_y.clone())?;
        let to_y = TcpChannel::connect(y_addr, Link::ClientToY, Some(transcript.clone()))?;
        let to_x = TcpChannel::connect(x_addr, Link::ClientToX, Some(transcript.clone()))?;
        let client = Client::new(keys, Box::new(to_y), Box::new(to_x), config, Some(seed));
        Ok(Self { client, server_y, proxy_x, transcript, y_addr, x_addr })
    }
}
