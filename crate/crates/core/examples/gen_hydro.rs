//! Writes the hydrological fixture: synthetic posts that pass the flood
//! dictionary, one JSON record per line.
//!
//! `cargo run -p contcomm-core --example gen_hydro -- <seed> <count> <out>`

use std::io::Write;

use contcomm_core::corpus::{load_dictionary, matches, PostSource, SourceEvent, SyntheticProfile, SyntheticSource};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2021);
    let count: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let out = args.get(3).cloned().unwrap_or_else(|| "hydro.jsonl".into());
    let dict = load_dictionary(concat!(env!("CARGO_MANIFEST_DIR"), "/data/flood.dict")).expect("flood dictionary");
    let mut src = SyntheticSource::new(seed, None, SyntheticProfile::hydro());
    let mut file = std::io::BufWriter::new(std::fs::File::create(&out).expect("create output"));
    let mut kept = 0;
    while kept < count {
        match src.poll_next() {
            SourceEvent::Record(r) if matches(&r, &dict) => {
                writeln!(file, "{}", r.to_json_line()).expect("write");
                kept += 1;
            }
            SourceEvent::Record(_) => {}
            other => panic!("synthetic source ended: {other:?}"),
        }
    }
    eprintln!("wrote {kept} records to {out}");
}
