use num_bigint::BigInt;
use proptest::prelude::*;

use neurofarm_core::fixedpoint::*;

fn formats() -> impl Strategy<Value = QFormat> {
    (2u8..=32).prop_flat_map(|w| (Just(w), 1..w)).prop_map(|(w, r)| QFormat::new(w, r).unwrap())
}

/// Round-half-even of `n / 2^k` over big integers.
fn big_shift_even(n: &BigInt, k: u32) -> BigInt {
    if k == 0 {
        return n.clone();
    }
    let d = BigInt::from(1) << k;
    // floor division
    let mut q = n / &d;
    if n < &BigInt::from(0) && &q * &d != *n {
        q -= 1;
    }
    let r2 = (n - &q * &d) * 2;
    if r2 > d || (r2 == d && (&q % 2) != BigInt::from(0)) {
        q += 1;
    }
    q
}

fn clamp_big(v: BigInt, fmt: QFormat) -> i64 {
    let lo = BigInt::from(fmt.raw_min());
    let hi = BigInt::from(fmt.raw_max());
    let c = if v < lo { lo } else if v > hi { hi } else { v };
    i64::try_from(c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn quantize_error_is_half_a_step(x in -1e6f64..1e6, fmt in formats()) {
        let clamped = x.clamp(fmt.real_min(), fmt.real_max());
        let err = (dequantize(quantize(x, fmt)) - clamped).abs();
        prop_assert!(err <= fmt.step() / 2.0, "{x} {fmt}: {err}");
    }

    #[test]
    fn quantize_is_monotone(a in -300f64..300.0, b in -300f64..300.0, fmt in formats()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize(lo, fmt).raw() <= quantize(hi, fmt).raw());
    }

    #[test]
    fn dequantize_roundtrips_raw(raw in any::<i16>()) {
        let q = QValue::new(i64::from(raw), QFormat::ACTIVATIONS).unwrap();
        prop_assert_eq!(quantize(dequantize(q), QFormat::ACTIVATIONS), q);
    }

    #[test]
    fn shift_matches_bigint(raw in -(1i64 << 50)..(1i64 << 50), k in 0u32..40) {
        let want = big_shift_even(&BigInt::from(raw), k);
        prop_assert_eq!(BigInt::from(shift_round_even(raw, k)), want);
    }

    #[test]
    fn mac_is_exact(pairs in prop::collection::vec((any::<i16>(), any::<i16>()), 1..256)) {
        let mut acc = Accumulator::for_dot();
        let mut oracle = BigInt::from(0);
        for &(w, a) in &pairs {
            let w = QValue::new(i64::from(w), QFormat::WEIGHTS).unwrap();
            let a = QValue::new(i64::from(a), QFormat::ACTIVATIONS).unwrap();
            acc = acc.mac(w, a);
            oracle += BigInt::from(w.raw()) * BigInt::from(a.raw());
        }
        prop_assert_eq!(BigInt::from(acc.raw()), oracle);
        prop_assert_eq!(acc.radix(), 19);
    }

    #[test]
    fn requantize_relu_matches_bigint(raw in -(1i64 << 46)..(1i64 << 46), fmt in formats()) {
        prop_assume!(fmt.radix() <= 19);
        let got = requantize_relu_raw(raw, 19, fmt);
        let want = if raw <= 0 { 0 } else {
            clamp_big(big_shift_even(&BigInt::from(raw), u32::from(19 - fmt.radix())), fmt)
        };
        prop_assert_eq!(i64::from(got), want);
        prop_assert!(got >= 0);
    }

    #[test]
    fn requantize_saturates(raw in -(1i64 << 46)..(1i64 << 46)) {
        let got = i64::from(requantize_raw(raw, 19, QFormat::ACTIVATIONS));
        let want = clamp_big(big_shift_even(&BigInt::from(raw), 13), QFormat::ACTIVATIONS);
        prop_assert_eq!(got, want);
    }
}

/// The largest dot product in the default network (3136 terms, all at the
/// extreme raw values) still fits the 48-bit accumulator.
#[test]
fn worst_case_dot_fits_accumulator() {
    let terms = BigInt::from(3136);
    let worst = terms * BigInt::from(32768) * BigInt::from(32768);
    assert!(worst < BigInt::from(1i64 << (ACCUMULATOR_BITS - 1)));
    let w = QValue::new(-32768, QFormat::WEIGHTS).unwrap();
    let a = QValue::new(-32768, QFormat::ACTIVATIONS).unwrap();
    let acc = (0..3136).fold(Accumulator::for_dot(), |acc, _| acc.mac(w, a));
    assert_eq!(BigInt::from(acc.raw()), worst);
}

#[test]
fn table_values() {
    assert_eq!(quantize(0.5, QFormat::ACTIVATIONS).raw(), 32);
    assert_eq!(dequantize(QValue::new(33, QFormat::ACTIVATIONS).unwrap()), 0.515625);
    let acc = Accumulator::for_dot()
        .mac(QValue::new(8192, QFormat::WEIGHTS).unwrap(), QValue::new(64, QFormat::ACTIVATIONS).unwrap());
    assert_eq!(acc.raw(), 524_288);
    assert_eq!(requantize_relu(Accumulator::from_raw(-1000, 19), QFormat::ACTIVATIONS).raw(), 0);
    assert_eq!(requantize_relu(acc, QFormat::ACTIVATIONS).raw(), 64);
    // 2^30 at radix 19 is 2^17 = 131072 activation units, past the 16-bit range
    let big = Accumulator::from_raw(1 << 30, 19);
    assert_eq!((1i64 << 30) >> (19 - 6), 131_072);
    assert_eq!(requantize_relu(big, QFormat::ACTIVATIONS).raw(), 32767);
}
