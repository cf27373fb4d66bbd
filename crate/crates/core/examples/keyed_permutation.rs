//! The keyed address permutation behind ASLR: a bijection on n-bit words.
use mitigation_games::permutation::AddressLayout;

fn main() {
    let layout = AddressLayout::new(8, 0xfeed, 0x3c).unwrap();
    let images: Vec<u64> = (0..8).map(|a| layout.forward(a).unwrap()).collect();
    println!("first images: {images:?}");
    let mut seen = vec![false; 256];
    for a in 0..256 {
        let b = layout.forward(a).unwrap();
        assert_eq!(layout.inverse(b).unwrap(), a);
        seen[b as usize] = true;
    }
    println!("bijective on 8 bits: {}", seen.iter().all(|s| *s));
}
