#![no_main]

use libfuzzer_sys::fuzz_target;
use lossnet_core::equilibrium::{phi, solve_xt, TVector};
use lossnet_core::fluid::{check_state, tau_all, vector_field, FluidState, Rk4};
use lossnet_core::Network;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(net) = Network::from_json(text) else {
        return;
    };
    if net.dim() > 64 {
        return;
    }
    let _ = net.derived();
    let x = FluidState::zeros(&net);
    let y = phi(&net, &x).expect("zero state is admissible");
    assert!(check_state(&net, &y).is_ok());
    for tau in tau_all(&net, &y).expect("phi image is admissible") {
        assert!(tau > 0.0 && tau <= 1.0);
    }
    let _ = vector_field(&net, &y);
    let mut z = y.clone();
    Rk4::new(&net).step(&mut z, 0.01);
    assert!(check_state(&net, &z).is_ok());
    let _ = solve_xt(&net, &TVector::ones(net.nodes()));
    if let Ok(t) = TVector::new(vec![0.5; net.nodes()]) {
        let _ = solve_xt(&net, &t);
    }
});
