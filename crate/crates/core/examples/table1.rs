//! Prints the composition bounds table for 32/64/128-bit targets.
use mitigation_games::bounds::{table1, TABLE1_ARCHES};

fn main() {
    let t = table1(&TABLE1_ARCHES, 1 << 25, 1 << 16, 1 << 12).expect("valid parameters");
    print!("{}", t.to_markdown());
    for arch in TABLE1_ARCHES {
        println!("{arch}-bit cells off by more than one bit: {}", t.mismatches(arch, 1).len());
    }
}
