//! The source served over TCP must be indistinguishable from the same
//! network queried in-process.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dkdhtl_core::data::{apply_shift, make_blobs, ShiftOptions, ShiftSpec};
use dkdhtl_core::hypothesis::PredictionServer;
use dkdhtl_core::model::init_network;
use dkdhtl_core::trainer::train;
use dkdhtl_core::{Error, Method, SourceHypothesis, TrainConfig};

#[test]
fn soak_of_ten_thousand_sequential_requests() {
    let net = init_network(&[10, 32, 5], 21).unwrap();
    let local = SourceHypothesis::in_process(net.clone()).unwrap();
    let server = PredictionServer::bind("127.0.0.1:0", net).unwrap().spawn().unwrap();
    let remote = SourceHypothesis::remote(&server.local_addr().to_string(), 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut divergent = 0;
    for _ in 0..10_000 {
        let scale = rng.random_range(0.01..100.0);
        let x: Vec<f64> = (0..10).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let a = local.predict(&x).unwrap();
        let b = remote.predict(&x).unwrap();
        if a.values().iter().zip(b.values()).any(|(p, q)| p.to_bits() != q.to_bits()) {
            divergent += 1;
        }
    }
    assert_eq!(divergent, 0);
    server.shutdown();
}

#[test]
fn bad_requests_leave_the_session_usable() {
    let net = init_network(&[3, 4], 2).unwrap();
    let server = PredictionServer::bind("127.0.0.1:0", net).unwrap().spawn().unwrap();
    let remote = SourceHypothesis::remote(&server.local_addr().to_string(), 3).unwrap();
    let err = remote.predict(&[1.0, 2.0]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err:?}");
    assert!(remote.predict(&[1.0, 2.0, 3.0]).is_ok());
    server.shutdown();
}

#[test]
fn training_against_a_served_source_is_identical() {
    let pool = make_blobs(150, 5, 10, 0.9, 3).unwrap();
    let data = apply_shift(&pool, &ShiftSpec::new([3], 0.2, 3), &ShiftOptions::default()).unwrap();
    let scfg = TrainConfig::new(Method::TargetOnly).with_seed(3);
    let (src, _) = train(init_network(&[10, 32, 5], 3).unwrap(), None, &data.source, &scfg).unwrap();
    let server = PredictionServer::bind("127.0.0.1:0", src.clone()).unwrap().spawn().unwrap();
    let remote = SourceHypothesis::remote(&server.local_addr().to_string(), 10).unwrap();
    let local = SourceHypothesis::in_process(src).unwrap();
    let cfg = TrainConfig::new(Method::DynamicKd).with_seed(5);
    let net = init_network(&[10, 32, 5], 5).unwrap();
    let (a, ra) = train(net.clone(), Some(&local), &data.target, &cfg).unwrap();
    let (b, rb) = train(net, Some(&remote), &data.target, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra.epochs, rb.epochs);
    assert_eq!(ra.metrics, rb.metrics);
    server.shutdown();
}

#[test]
fn lost_server_is_a_transport_error() {
    let net = init_network(&[2, 2], 0).unwrap();
    let server = PredictionServer::bind("127.0.0.1:0", net).unwrap().spawn().unwrap();
    let addr = server.local_addr().to_string();
    let remote = SourceHypothesis::remote(&addr, 2).unwrap();
    server.shutdown();
    let err = remote.predict(&[0.5, 0.5]).unwrap_err();
    assert!(matches!(err, Error::Transport { .. }), "{err:?}");
}
