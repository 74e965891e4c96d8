use ogalab::dictionary::{gen_identity_hadamard, regime_ceiling};

#[test]
fn hadamard_union_k12_coherence_and_ceiling() {
    let d = gen_identity_hadamard(12).unwrap();
    assert_eq!((d.len(), d.dim()), (8192, 4096));
    let c = d.coherence();
    assert!((c.m_coherence - 0.015625).abs() < 1e-15);
    assert_eq!(c.regime_ceiling(), Some(3));
    assert_eq!(regime_ceiling(c.m_coherence), Some(3));
    let sub = d.random_subdictionary(512, 1).unwrap();
    assert_eq!(sub.len(), 512);
    assert!(sub.coherence().m_coherence <= c.m_coherence + 1e-15);
}
