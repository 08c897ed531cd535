//! Every example in docs/wire.md must decode and re-encode to the same bytes.

use lbrs::protocol::wire::{Body, Envelope};

const DOC: &str = include_str!("../../../docs/wire.md");

fn json_blocks() -> Vec<&'static str> {
    DOC.split("```json\n").skip(1).map(|rest| rest.split("\n```").next().unwrap()).collect()
}

#[test]
fn examples_round_trip() {
    let blocks = json_blocks();
    assert!(blocks.len() >= 12, "{} examples", blocks.len());
    let mut types = Vec::new();
    for block in blocks {
        let env = Envelope::decode(block.as_bytes()).unwrap_or_else(|e| panic!("{block}: {e}"));
        assert_eq!(String::from_utf8(env.encode()).unwrap(), block);
        types.push(env.body.type_name());
    }
    for t in [
        "SETUP_KEYS",
        "CM_CONTRIB",
        "INIT_STRIP_REQ",
        "INIT_STRIP_RESP",
        "PV_UPLOAD",
        "LOC_UPLOAD",
        "M2A_ROUND1",
        "M2A_ROUND2",
        "RL_RESPONSE",
        "CM_DELTA",
        "ABORT",
        "ACK",
    ] {
        assert!(types.contains(&t), "{t} has no example");
    }
}

#[test]
fn hex_dump_matches_frame() {
    let dump: Vec<u8> = DOC
        .lines()
        .skip_while(|l| !l.starts_with("00 00 00 22"))
        .take_while(|l| !l.starts_with("```"))
        .flat_map(|l| l[..48].split_whitespace().map(|b| u8::from_str_radix(b, 16).unwrap()).collect::<Vec<_>>())
        .collect();
    assert_eq!(dump, Envelope::new(7, 2, Body::Ack).to_frame());
}
