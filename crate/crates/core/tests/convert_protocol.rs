//! Conversion-circuit tests: ripple-carry adder, A2B, B2A.

use moz_core::algebra::RingEl64;
use moz_core::convert::{a2b, b2a, rca, BitVecShare};
use moz_core::rss::{self, reconstruct, share, RssShare};
use moz_core::session::{SecurityMode, SessionOptions};
use moz_core::trio;
use moz_core::MpcError;
use rand::{rngs::StdRng, Rng, SeedableRng};

fn deal_bits(width: usize, values: &[u64], tag: u64) -> [BitVecShare; 3] {
    BitVecShare::share_values(width, values, &mut StdRng::seed_from_u64(tag))
}

#[test]
fn rca_small_sums() {
    let xs = deal_bits(8, &[3], 1);
    let ys = deal_bits(8, &[5], 2);
    let out = trio::run(SecurityMode::MalLite, 100, |s| {
        let i = s.party().index();
        rca(s, &xs[i], &ys[i])
    });
    assert_eq!(BitVecShare::reconstruct(&out), vec![8]);
}

#[test]
fn rca_identity_with_zero() {
    let values: Vec<u64> = vec![0, 1, 77, 200, 255];
    let xs = deal_bits(8, &values, 3);
    let zeros = deal_bits(8, &[0; 5], 4);
    let out = trio::run(SecurityMode::SemiHonest, 101, |s| {
        let i = s.party().index();
        rca(s, &xs[i], &zeros[i])
    });
    assert_eq!(BitVecShare::reconstruct(&out), values);
}

#[test]
fn rca_width_mismatch_is_error() {
    let xs = deal_bits(8, &[1], 5);
    let ys = deal_bits(16, &[1], 6);
    let out = trio::try_run(SecurityMode::SemiHonest, 102, |s| {
        let i = s.party().index();
        rca(s, &xs[i], &ys[i]).map(|_| ())
    });
    assert!(out.iter().all(|r| matches!(r, Err(MpcError::Format(_)))));
}

#[test]
fn rca_exhaustive_width_8() {
    // All 2^16 operand pairs, vectorized over lanes, against integer
    // addition mod 256.
    let mut lhs = Vec::with_capacity(1 << 16);
    let mut rhs = Vec::with_capacity(1 << 16);
    for a in 0..256u64 {
        for b in 0..256u64 {
            lhs.push(a);
            rhs.push(b);
        }
    }
    let xs = deal_bits(8, &lhs, 7);
    let ys = deal_bits(8, &rhs, 8);
    let out = trio::run(SecurityMode::SemiHonest, 103, |s| {
        let i = s.party().index();
        let before = s.counters().and_gates;
        let sum = rca(s, &xs[i], &ys[i])?;
        assert_eq!(s.counters().and_gates - before, 7, "w-1 AND columns");
        Ok(sum)
    });
    let sums = BitVecShare::reconstruct(&out);
    for (k, sum) in sums.iter().enumerate() {
        assert_eq!(*sum, (lhs[k] + rhs[k]) % 256, "lane {k}");
    }
}

#[test]
fn a2b_zero_and_known_components() {
    // shares of 0 -> bitvector 0
    let zeros = share(RingEl64(0), &mut StdRng::seed_from_u64(9));
    let out = trio::run(SecurityMode::MalLite, 104, |s| {
        a2b(s, &[zeros[s.party().index()]])
    });
    assert_eq!(BitVecShare::reconstruct(&out), vec![0]);

    // components (1,2,3) -> bits of 6
    let shares = rss::share_with_components(RingEl64(6), RingEl64(1), RingEl64(2));
    let out = trio::run(SecurityMode::MalLite, 105, |s| {
        a2b(s, &[shares[s.party().index()]])
    });
    assert_eq!(BitVecShare::reconstruct(&out), vec![6]);
}

#[test]
fn a2b_random_round_trip() {
    let mut rng = StdRng::seed_from_u64(10);
    let values: Vec<u64> = (0..10_000).map(|_| rng.gen()).collect();
    let shares: Vec<[RssShare<RingEl64>; 3]> =
        values.iter().map(|&v| share(RingEl64(v), &mut rng)).collect();
    let out = trio::run(SecurityMode::SemiHonest, 106, |s| {
        let i = s.party().index();
        let mine: Vec<_> = shares.iter().map(|sh| sh[i]).collect();
        a2b(s, &mine)
    });
    assert_eq!(BitVecShare::reconstruct(&out), values);
}

#[test]
fn b2a_with_forced_zero_masks_pins_layout() {
    // With r_1 = r_2 = 0 the output reconstructs to x and party 1 holds
    // (x, 0).
    let x = 0xfeed_beef_u64;
    let xs = deal_bits(64, &[x], 11);
    let opts = SessionOptions {
        zero_conversion_masks: true,
    };
    let out = trio::try_run_wrapped(
        SecurityMode::MalLite,
        opts,
        107,
        |_, t| t,
        |s| {
            let i = s.party().index();
            b2a(s, &xs[i])
        },
    )
    .map(|r| r.unwrap());
    let shares = [out[0][0], out[1][0], out[2][0]];
    assert_eq!(reconstruct(&shares), RingEl64(x));
    assert_eq!(shares[0], RssShare::new(RingEl64(x), RingEl64(0)));
}

#[test]
fn b2a_zero_input() {
    let xs = deal_bits(64, &[0, 0, 0], 12);
    let out = trio::run(SecurityMode::MalLite, 108, |s| {
        let i = s.party().index();
        b2a(s, &xs[i])
    });
    for k in 0..3 {
        let shares = [out[0][k], out[1][k], out[2][k]];
        assert_eq!(reconstruct(&shares), RingEl64(0));
    }
}

#[test]
fn b2a_sign_convention_exact() {
    // Reconstructed output equals r_3 - r_1 - r_2 = x exactly mod 2^64,
    // including values with the top bit set.
    let values = [u64::MAX, 1u64 << 63, 0x8000_0000_0000_0001];
    let xs = deal_bits(64, &values, 13);
    let out = trio::run(SecurityMode::MalLite, 109, |s| {
        let i = s.party().index();
        b2a(s, &xs[i])
    });
    for (k, &v) in values.iter().enumerate() {
        let shares = [out[0][k], out[1][k], out[2][k]];
        assert_eq!(reconstruct(&shares), RingEl64(v));
    }
}

#[test]
fn conversion_round_trips() {
    // b2a(a2b(x)) and a2b(b2a(x)) are identity on reconstructed values.
    let mut rng = StdRng::seed_from_u64(14);
    let values: Vec<u64> = (0..10_000).map(|_| rng.gen()).collect();
    let arith: Vec<[RssShare<RingEl64>; 3]> =
        values.iter().map(|&v| share(RingEl64(v), &mut rng)).collect();
    let bools = BitVecShare::share_values(64, &values, &mut rng);

    let out = trio::run(SecurityMode::SemiHonest, 110, |s| {
        let i = s.party().index();
        let mine: Vec<_> = arith.iter().map(|sh| sh[i]).collect();
        let as_bits = a2b(s, &mine)?;
        let round1 = b2a(s, &as_bits)?;
        let as_arith = b2a(s, &bools[i])?;
        let round2 = a2b(s, &as_arith)?;
        Ok((round1, round2))
    });
    for k in 0..values.len() {
        let shares = [out[0].0[k], out[1].0[k], out[2].0[k]];
        assert_eq!(reconstruct(&shares), RingEl64(values[k]), "b2a∘a2b lane {k}");
    }
    let bits = [out[0].1.clone(), out[1].1.clone(), out[2].1.clone()];
    assert_eq!(BitVecShare::reconstruct(&bits), values, "a2b∘b2a");
}
