#![no_main]

use libfuzzer_sys::fuzz_target;
use lossnet_core::appendix::{f_n, split, UnitSequence};

/// Pairs of bytes become components in [1/256, 1].
fn decode(data: &[u8]) -> Option<(UnitSequence, UnitSequence)> {
    let n = data.len() / 2;
    if n == 0 || n > 64 {
        return None;
    }
    let unit = |b: u8| (b as f64 + 1.0) / 256.0;
    let u = data[..n].iter().map(|&b| unit(b)).collect();
    let v = data[n..2 * n].iter().map(|&b| unit(b)).collect();
    Some((UnitSequence::new(u).ok()?, UnitSequence::new(v).ok()?))
}

fuzz_target!(|data: &[u8]| {
    let Some((u, v)) = decode(data) else { return };
    let f = f_n(&u, &v).expect("equal lengths");
    assert!(f >= -1e-9 * (1.0 + f.abs()), "f_n = {f}");
    for k in 1..u.len() {
        let s = split(&u, &v, k).expect("valid split");
        assert!((s.total() - f).abs() <= 1e-9 * (1.0 + f.abs()));
    }
});
