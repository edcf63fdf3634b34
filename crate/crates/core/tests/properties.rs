use proptest::prelude::*;

use cachegate::align::{div_round_half_even, psu_compare, top_k, Aligner, Precision};
use cachegate::hdc::{bind, cosine, hamming, Hypervector};
use cachegate::memory::{BankMask, ItemMemory};
use cachegate::controller::LoadSample;
use cachegate::workload::{StreamWindow, Trace};

fn hv(dim: usize) -> impl Strategy<Value = Hypervector> {
    prop::collection::vec(any::<bool>(), dim).prop_map(|bits| {
        let v: Vec<i8> = bits.into_iter().map(|b| if b { 1 } else { -1 }).collect();
        Hypervector::from_bipolar(&v).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn binding_is_an_involution(a in hv(200), b in hv(200)) {
        let ab = bind(&a, &b).unwrap();
        prop_assert_eq!(bind(&ab, &b).unwrap(), a.clone());
        prop_assert_eq!(ab, bind(&b, &a).unwrap());
    }

    #[test]
    fn hamming_and_cosine_agree(a in hv(320), b in hv(320), banks in prop::sample::select(vec![1usize, 2, 4, 5])) {
        let mask = BankMask::full(320, banks).unwrap();
        let h = hamming(&a, &b, &mask).unwrap();
        let c = cosine(&a, &b, &mask).unwrap();
        prop_assert_eq!(c, f64::from(320 - 2 * h as i32) / 320.0);
    }

    #[test]
    fn rounding_matches_a_float_reference(n in -1_000_000i64..1_000_000, d in 1i64..5000) {
        let got = div_round_half_even(n, d);
        let x = n as f64 / d as f64;
        let lo = x.floor();
        let want = if (x - lo - 0.5).abs() < 1e-12 {
            if (lo as i64) % 2 == 0 { lo } else { lo + 1.0 }
        } else {
            x.round()
        };
        prop_assert_eq!(got, want as i64);
    }

    #[test]
    fn delta_update_equals_rescan(
        seed in any::<u64>(),
        flips in prop::collection::vec(0usize..512, 0..80),
        count in 1usize..=8,
        precision in prop_oneof![Just(Precision::Exact), Just(Precision::Int8), Just(Precision::Int4)],
    ) {
        let mem = ItemMemory::random(12, 512, 8, seed).unwrap();
        let mask = BankMask::leading(512, 8, count.next_power_of_two().min(8)).unwrap();
        let aligner = Aligner::default();
        let mut meter = mem.new_meter();
        let q0 = Hypervector::random(512, seed, 1).unwrap();
        let mut q1 = q0.clone();
        for &i in &flips {
            q1.flip(i);
        }
        let mut state = aligner.full_scan(&q0, &mem, &mask, precision, &mut meter).unwrap();
        let (_, delta) = psu_compare(&q1, &q0, &mask, usize::MAX).unwrap();
        aligner.delta_update(&mut state, &q1, &delta, &mem, &mask, &mut meter).unwrap();
        let fresh = aligner.full_scan(&q1, &mem, &mask, precision, &mut meter).unwrap();
        prop_assert_eq!(state.raw(), fresh.raw());
    }

    #[test]
    fn top_k_is_sorted_and_margin_nonnegative(seed in any::<u64>(), k in 1usize..10) {
        let mem = ItemMemory::random(10, 256, 4, seed).unwrap();
        let mut meter = mem.new_meter();
        let q = Hypervector::random(256, seed, 2).unwrap();
        let s = Aligner::default().full_scan(&q, &mem, &mem.full_mask(), Precision::Exact, &mut meter).unwrap();
        let t = top_k(&s, k).unwrap();
        let raw = s.raw();
        prop_assert!(t.key.windows(2).all(|p| raw[p[0]] > raw[p[1]] || (raw[p[0]] == raw[p[1]] && p[0] < p[1])));
        prop_assert!(t.margin >= 0.0);
        let kth = raw[t.key[k - 1]];
        prop_assert!((0..10).filter(|j| !t.key.contains(j)).all(|j| raw[j] <= kth));
    }

    #[test]
    fn traces_round_trip(dim in 1usize..300, loads in prop::collection::vec((0u32..100, 0u32..100, 0usize..1000), 0..12)) {
        let t = Trace {
            dim,
            windows: loads
                .iter()
                .enumerate()
                .map(|(i, &(n, q, truth))| StreamWindow {
                    query: Hypervector::random(dim, 3, i as u64).unwrap(),
                    load: LoadSample::new(n, q),
                    truth,
                })
                .collect(),
        };
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        prop_assert_eq!(Trace::read_from(&mut bytes.as_slice()).unwrap(), t);
    }

    #[test]
    fn hypervectors_round_trip(v in hv(131)) {
        let bytes = v.to_bytes();
        prop_assert_eq!(Hypervector::read_from(&mut bytes.as_slice()).unwrap(), v);
    }
}
