use num_bigint::BigUint;
use proptest::prelude::*;
use rust_decimal::Decimal;
use wsn_ake::costmodel::{total_cost, CostProfile, OpCounts, UnitCosts};
use wsn_ake::primitives::{ae_open, ae_seal, CryptoSuite, Digest, NONCE_TAG_TO_GATEWAY};

fn digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 32]>().prop_map(Digest::new)
}

fn counts() -> impl Strategy<Value = OpCounts> {
    (0u64..50, 0u64..50, 0u64..50).prop_map(|(h, e, s)| OpCounts::new(h, e, s))
}

fn profile() -> impl Strategy<Value = CostProfile> {
    (counts(), counts(), counts()).prop_map(|(u, g, s)| CostProfile::new(u, g, s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ecdh_agrees_on_toy(a in 1u32..19, b in 1u32..19) {
        let suite = CryptoSuite::toy();
        let curve = suite.curve();
        let (a, b) = (curve.scalar(BigUint::from(a)).unwrap(), curve.scalar(BigUint::from(b)).unwrap());
        let pa = suite.mul_generator(&a);
        let pb = suite.mul_generator(&b);
        prop_assert_eq!(suite.scalar_mult(&a, &pb).unwrap(), suite.scalar_mult(&b, &pa).unwrap());
    }

    #[test]
    fn ecdh_agrees_on_standard(a in any::<u64>().prop_filter("nonzero", |v| *v != 0), b in any::<u64>().prop_filter("nonzero", |v| *v != 0)) {
        let suite = CryptoSuite::standard();
        let curve = suite.curve();
        let (a, b) = (curve.scalar(BigUint::from(a)).unwrap(), curve.scalar(BigUint::from(b)).unwrap());
        let pa = suite.mul_generator(&a);
        let pb = suite.mul_generator(&b);
        prop_assert_eq!(suite.scalar_mult(&a, &pb).unwrap(), suite.scalar_mult(&b, &pa).unwrap());
    }

    #[test]
    fn digest_xor_group_laws(x in digest(), y in digest(), z in digest()) {
        prop_assert_eq!((x ^ y) ^ z, x ^ (y ^ z));
        prop_assert_eq!(x ^ y, y ^ x);
        prop_assert_eq!(x ^ x, Digest::ZERO);
        prop_assert_eq!(x ^ Digest::ZERO, x);
    }

    #[test]
    fn ae_roundtrip_and_tamper(key in digest(), other in digest(), msg in prop::collection::vec(any::<u8>(), 0..200), bit in any::<usize>()) {
        let ct = ae_seal(&key, NONCE_TAG_TO_GATEWAY, &msg);
        prop_assert_eq!(ae_open(&key, &ct).unwrap(), msg);
        if other != key {
            prop_assert!(ae_open(&other, &ct).is_err());
        }
        let mut raw = ct.encode();
        let i = bit % (raw.len() * 8);
        raw[i / 8] ^= 1 << (i % 8);
        if let Ok(bad) = wsn_ake::primitives::Ciphertext::decode(&raw) {
            prop_assert!(ae_open(&key, &bad).is_err());
        }
    }

    #[test]
    fn total_cost_is_linear(p in profile(), q in profile(), k in 0u64..5) {
        let u = UnitCosts::reference();
        let sum = CostProfile::new(p.user + q.user, p.gateway + q.gateway, p.sensor + q.sensor);
        prop_assert_eq!(total_cost(&sum, &u), total_cost(&p, &u) + total_cost(&q, &u));
        let scaled = CostProfile::new(
            OpCounts::new(p.user.hash * k, p.user.ecc * k, p.user.sym * k),
            OpCounts::new(p.gateway.hash * k, p.gateway.ecc * k, p.gateway.sym * k),
            OpCounts::new(p.sensor.hash * k, p.sensor.ecc * k, p.sensor.sym * k),
        );
        prop_assert_eq!(total_cost(&scaled, &u), total_cost(&p, &u) * Decimal::from(k));
    }
}
