use num_bigint::BigUint;

use lbrs::dataset::gen_data;
use lbrs::hilbert::GridCell;
use lbrs::protocol::wire::{Body, Envelope, MulWire};
use lbrs::protocol::{ClientConfig, Loopback, Service, Stage, TcpDeployment};
use lbrs::recommender::{build_cm, recommend_plain, CoMatrix, InversionList, PreferenceVector};
use lbrs::she::{keygen, KeyGenParams, SheKeys};
use lbrs::Error;

fn keys(seed: u64) -> SheKeys {
    keygen(&KeyGenParams::seeded(64, seed)).unwrap()
}

fn config(order: u32) -> ClientConfig {
    ClientConfig { order, ..ClientConfig::default() }
}

fn assert_abort(result: lbrs::Result<Body>) {
    match result {
        Err(Error::Aborted { .. }) => {}
        other => panic!("expected an ABORT reply, got {other:?}"),
    }
}

#[test]
fn end_to_end_matches_plaintext_then_update() {
    let data = gen_data(8, 3, 5).unwrap();
    let mut lb = Loopback::new(keys(1), config(data.meta.order), 7);
    lb.client.setup().unwrap();
    lb.client.initialize(8, &data.contributions().unwrap()).unwrap();
    assert_eq!(lb.server_y.stage(lb.client.session_id()), Some(Stage::Init));

    let cm = data.co_matrix().unwrap();
    let pv = &data.pvs[1];
    for item in [0usize, 3, 7] {
        let outcome = lb.client.recommend(pv, data.placements[item]).unwrap();
        assert_eq!(outcome.location, item as u64);
        assert_eq!(outcome.items, recommend_plain(&cm, pv, item, 1).unwrap());
    }

    // a new user who visited items 1, 2 and 6
    let mut lists = data.lists.clone();
    let old = CoMatrix::zeros(8);
    lists.extend(99, [1, 2, 6]);
    let new = build_cm(&lists.single(99), 8).unwrap();
    lb.client.update(&old, &new).unwrap();
    assert_eq!(lb.server_y.stage(lb.client.session_id()), Some(Stage::Update));

    let cm2 = build_cm(&lists, 8).unwrap();
    let outcome = lb.client.recommend(pv, data.placements[4]).unwrap();
    assert_eq!(outcome.items, recommend_plain(&cm2, pv, 4, 1).unwrap());
    assert_ne!(cm, cm2);
}

#[test]
fn zero_users_give_zero_scores() {
    let mut lb = Loopback::new(keys(2), config(2), 1);
    lb.client.setup().unwrap();
    lb.client.initialize(5, &[]).unwrap();
    let pv = PreferenceVector::new(vec![3, 0, 1, 15, 2], 15).unwrap();
    let outcome = lb.client.recommend(&pv, GridCell::new(0, 0)).unwrap();
    assert_eq!(outcome.location, 0);
    assert_eq!(outcome.items.len(), 2);
    assert!(outcome.items.iter().all(|r| r.score == 0));
}

#[test]
fn all_zero_pv_completes() {
    let mut lists = InversionList::new();
    lists.extend(0, [0, 1, 2]);
    let cm = build_cm(&lists, 4).unwrap();
    let mut lb = Loopback::new(keys(3), config(1), 2);
    lb.client.setup().unwrap();
    lb.client.initialize(4, std::slice::from_ref(&cm)).unwrap();
    let pv = PreferenceVector::new(vec![0; 4], 15).unwrap();
    let outcome = lb.client.recommend(&pv, GridCell::new(1, 1)).unwrap();
    assert!(outcome.items.iter().all(|r| r.score == 0));
}

#[test]
fn location_outside_grid_sends_nothing() {
    let mut lb = Loopback::new(keys(4), config(2), 3);
    lb.client.setup().unwrap();
    lb.client.initialize(4, &[]).unwrap();
    let before = lb.transcript.len();
    let pv = PreferenceVector::new(vec![1; 4], 15).unwrap();
    assert!(matches!(lb.client.recommend(&pv, GridCell::new(4, 0)), Err(Error::Domain(_))));
    assert_eq!(lb.transcript.len(), before);
}

#[test]
fn wrong_size_contribution_rejected_before_upload() {
    let mut lb = Loopback::new(keys(5), config(2), 4);
    lb.client.setup().unwrap();
    let before = lb.transcript.len();
    assert!(lb.client.initialize(4, &[CoMatrix::zeros(3)]).is_err());
    assert_eq!(lb.transcript.len(), before);
}

#[test]
fn illegal_transitions_are_rejected_and_leave_state() {
    let k = keys(6);
    let pk_mul = k.mul.public.clone();
    let mut lb = Loopback::new(k, config(1), 5);
    let id = lb.client.session_id();
    lb.client.setup().unwrap();
    assert_eq!(lb.server_y.stage(id), Some(Stage::Setup));

    let one = MulWire { c1: BigUint::from(3u32), c2: pk_mul.g().clone() };
    assert_abort(lb.client.send_y(Body::PvUpload { size: 1, hi: vec![one.clone()], lo: vec![one] }));
    assert_eq!(lb.server_y.stage(id), Some(Stage::Setup));
    assert_abort(lb.client.send_y(Body::LocUpload { loc: BigUint::from(1u32) }));
    assert_abort(lb.client.send_y(Body::CmDelta { size: 1, entries: vec![BigUint::from(1u32)] }));
    assert_abort(lb.client.send_y(Body::InitStripResp { values: vec![] }));
    assert_eq!(lb.server_y.stage(id), Some(Stage::Setup));

    // contributions still work after the rejections
    let reply = lb.client.send_y(Body::CmContrib { size: 2, entries: vec![], last: false }).unwrap();
    assert_eq!(reply, Body::Ack);
    assert_eq!(lb.server_y.stage(id), Some(Stage::Init));
    assert_abort(lb.client.send_y(Body::CmContrib { size: 3, entries: vec![], last: false }));
    assert_abort(lb.client.send_y(Body::LocUpload { loc: BigUint::from(1u32) }));
    assert_eq!(lb.server_y.stage(id), Some(Stage::Init));
}

#[test]
fn out_of_order_seq_is_rejected() {
    let k = keys(7);
    let mut lb = Loopback::new(k, config(1), 6);
    lb.client.setup().unwrap();
    let mut file = lb.client.session_file();
    file.seq_y += 5;
    let id = file.session;
    let env = Envelope::new(id, file.seq_y, Body::CmContrib { size: 1, entries: vec![], last: false });
    let reply = Envelope::decode(&lb.server_y.handle(&env.encode())).unwrap();
    assert!(matches!(reply.body, Body::Abort { .. }), "{reply:?}");
    assert_eq!(lb.server_y.stage(id), Some(Stage::Setup));
}

#[test]
fn zero_elgamal_component_aborts_session() {
    let mut lb = Loopback::new(keys(8), config(1), 8);
    let id = lb.client.session_id();
    lb.client.setup().unwrap();
    lb.client.initialize(2, &[]).unwrap();
    let good = MulWire { c1: BigUint::from(3u32), c2: BigUint::from(16u32) };
    let zero = MulWire { c1: BigUint::from(0u32), c2: BigUint::from(16u32) };
    assert_abort(lb.client.send_y(Body::PvUpload { size: 2, hi: vec![good.clone(), zero], lo: vec![good.clone(), good] }));
    assert_eq!(lb.server_y.stage(id), None);
}

#[test]
fn client_abort_clears_both_servers() {
    let mut lb = Loopback::new(keys(9), config(1), 9);
    lb.client.setup().unwrap();
    assert_eq!(lb.server_y.session_count(), 1);
    assert_eq!(lb.proxy_x.session_count(), 1);
    lb.client.abort(Stage::Init, "test");
    assert_eq!(lb.server_y.session_count(), 0);
    assert_eq!(lb.proxy_x.session_count(), 0);
}

#[test]
fn failed_recommendation_tears_down_everywhere() {
    let mut lb = Loopback::new(keys(10), config(1), 10);
    lb.client.setup().unwrap();
    lb.client.initialize(4, &[]).unwrap();
    // proxy forgets the session: every switch now fails
    let abort = Envelope::new(lb.client.session_id(), 0, Body::Abort { stage: "test".into(), reason: "drop".into(), retry: false });
    lb.proxy_x.handle(&abort.encode());
    let pv = PreferenceVector::new(vec![1; 4], 15).unwrap();
    let err = lb.client.recommend(&pv, GridCell::new(0, 0)).unwrap_err();
    match err {
        Error::Aborted { stage, .. } => assert_eq!(stage, "recommend"),
        other => panic!("{other:?}"),
    }
    assert_eq!(lb.server_y.session_count(), 0);
}

#[test]
fn concurrent_sessions_are_independent() {
    let data = gen_data(6, 2, 11).unwrap();
    let cm = data.co_matrix().unwrap();
    let contributions = data.contributions().unwrap();
    let handles: Vec<_> = (0..3u64)
        .map(|s| {
            let data = data.clone();
            let cm = cm.clone();
            let contributions = contributions.clone();
            std::thread::spawn(move || {
                let mut lb = Loopback::new(keys(20 + s), config(data.meta.order), s);
                lb.client.setup().unwrap();
                lb.client.initialize(6, &contributions).unwrap();
                let out = lb.client.recommend(&data.pvs[0], data.placements[s as usize]).unwrap();
                assert_eq!(out.items, recommend_plain(&cm, &data.pvs[0], s as usize, 1).unwrap());
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
}

#[test]
fn shared_servers_serve_many_sessions_over_tcp() {
    let data = gen_data(5, 2, 3).unwrap();
    let mut tcp = TcpDeployment::start(keys(30), config(data.meta.order), 3).unwrap();
    tcp.client.setup().unwrap();
    tcp.client.initialize(5, &data.contributions().unwrap()).unwrap();
    let out = tcp.client.recommend(&data.pvs[1], data.placements[2]).unwrap();
    assert_eq!(out.items, recommend_plain(&data.co_matrix().unwrap(), &data.pvs[1], 2, 1).unwrap());
}
