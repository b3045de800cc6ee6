#![no_main]

// Byte layout: one byte for the boundary a (1..=64), then one byte per
// forward probability mapped into (0, 1).

use libfuzzer_sys::fuzz_target;
use rqclab::gambler::{ruin_exact_linear, ruin_probability, RuinInstance};

fn prob(b: u8) -> f64 {
    (b as f64 + 0.5) / 256.0
}

fuzz_target!(|data: &[u8]| {
    let Some((&head, rest)) = data.split_first() else {
        return;
    };
    let a = (head % 64) as usize + 1;
    if rest.len() < a {
        return;
    }
    let p_minus = prob(rest[0]);
    let p_plus: Vec<f64> = rest[1..a].iter().map(|&b| prob(b)).collect();
    let Ok(inst) = RuinInstance::new(a, p_minus, p_plus) else {
        return;
    };
    let linear = ruin_exact_linear(&inst).expect("valid instance");
    assert!((-1e-12..=1.0 + 1e-12).contains(&linear));
    if let Ok(closed) = ruin_probability(&inst) {
        assert!((closed - linear).abs() <= 1e-9, "{closed} vs {linear}");
    }
});
