//! Three-party protocol tests for sharing, opening, multiplication,
//! preprocessing and product verification.

use moz_core::algebra::{Gf128, Ring, RingEl64};
use moz_core::net::MsgTag;
use moz_core::rss::{
    self, mul_beaver, mul_with_triples, open_to, open_vec, reconstruct, share, triple_gen,
    BeaverTriple, ProductWitness, RssShare,
};
use moz_core::session::{PartyId, SecurityMode, SessionOptions};
use moz_core::trio;
use moz_core::MpcError;
use rand::{rngs::StdRng, Rng, SeedableRng};
use std::sync::{Arc, Mutex};

fn deal<T: Ring>(secret: T, tag: u64) -> [RssShare<T>; 3] {
    share(secret, &mut StdRng::seed_from_u64(tag))
}

#[test]
fn open_returns_secret_at_all_parties() {
    for mode in [SecurityMode::SemiHonest, SecurityMode::MalLite] {
        let shares = deal(RingEl64(42), 1);
        let opened = trio::run(mode, 10, |s| {
            Ok(open_vec(s, &[shares[s.party().index()]])?[0])
        });
        assert_eq!(opened, [RingEl64(42); 3]);
    }
}

#[test]
fn open_flipped_bit_aborts() {
    let shares = deal(RingEl64(42), 2);
    let results = trio::try_run_wrapped(
        SecurityMode::MalLite,
        SessionOptions::default(),
        11,
        |party, transport| {
            if party.number() == 2 {
                Box::new(trio::Tamper::new(transport, |_, tag, payload: &mut Vec<u8>| {
                    if tag == MsgTag::OpenOwn && !payload.is_empty() {
                        payload[0] ^= 1;
                    }
                }))
            } else {
                transport
            }
        },
        |s| {
            let v = open_vec(s, &[shares[s.party().index()]])?;
            Ok(v[0])
        },
    );
    // Party 3 receives party 2's tampered own-component and the honest
    // redundant copy from party 1, so at least it must abort.
    assert!(
        results
            .iter()
            .any(|r| matches!(r, Err(MpcError::OpenInconsistent(_)))),
        "no party detected the flipped bit: {results:?}"
    );
}

#[test]
fn open_to_subset_reveals_only_there() {
    let shares = deal(RingEl64(777), 3);
    let [p1, p2, p3] = PartyId::ALL;
    for mode in [SecurityMode::SemiHonest, SecurityMode::MalLite] {
        let out = trio::run(mode, 12, |s| {
            open_to(s, &[p1, p3], &[shares[s.party().index()]])
        });
        assert_eq!(out[p1.index()].as_ref().unwrap()[0], RingEl64(777));
        assert_eq!(out[p3.index()].as_ref().unwrap()[0], RingEl64(777));
        assert!(out[p2.index()].is_none());
    }
}

#[test]
fn linear_ops_cost_no_communication() {
    let xs = deal(RingEl64(1234), 4);
    let ys = deal(RingEl64(5678), 5);
    let shares = trio::run(SecurityMode::MalLite, 13, |s| {
        let i = s.party().index();
        let before = s.counters();
        let sum = xs[i].add(ys[i]);
        let scaled = xs[i].mul_public(RingEl64(3));
        let shifted = rss::add_public(s.party(), ys[i], RingEl64(100));
        let after = s.counters();
        assert_eq!(before.messages_sent, after.messages_sent);
        assert_eq!(before.messages_received, after.messages_received);
        Ok((sum, scaled, shifted))
    });
    let sums = [shares[0].0, shares[1].0, shares[2].0];
    let scaleds = [shares[0].1, shares[1].1, shares[2].1];
    let shifteds = [shares[0].2, shares[1].2, shares[2].2];
    assert_eq!(reconstruct(&sums), RingEl64(1234 + 5678));
    assert_eq!(reconstruct(&scaleds), RingEl64(1234 * 3));
    assert_eq!(reconstruct(&shifteds), RingEl64(5678 + 100));
}

#[test]
fn beaver_with_all_zero_triple_collapses_to_de() {
    let xs = deal(RingEl64(7), 6);
    let ys = deal(RingEl64(9), 7);
    let out = trio::run(SecurityMode::SemiHonest, 14, |s| {
        let i = s.party().index();
        let triple = BeaverTriple {
            a: RssShare::ZERO,
            b: RssShare::ZERO,
            c: RssShare::ZERO,
        };
        mul_beaver(s, xs[i], ys[i], triple)
    });
    assert_eq!(reconstruct(&out), RingEl64(63));
}

#[test]
fn beaver_zero_operand_gives_zero() {
    let xs = deal(RingEl64(0), 8);
    let ys = deal(RingEl64(0xdead_beef), 9);
    let out = trio::run(SecurityMode::MalLite, 15, |s| {
        let i = s.party().index();
        let t = s.take_triples::<RingEl64>(1)?.pop().unwrap();
        mul_beaver(s, xs[i], ys[i], t)
    });
    assert_eq!(reconstruct(&out), RingEl64(0));
}

#[test]
fn beaver_random_products_both_algebras() {
    let mut rng = StdRng::seed_from_u64(31);
    let count = 1000;
    let ring_pairs: Vec<(RingEl64, RingEl64)> = (0..count)
        .map(|_| (RingEl64(rng.gen()), RingEl64(rng.gen())))
        .collect();
    let gf_pairs: Vec<(Gf128, Gf128)> = (0..count)
        .map(|_| (Gf128(rng.gen()), Gf128(rng.gen())))
        .collect();
    let ring_shares: Vec<_> = ring_pairs
        .iter()
        .map(|&(x, y)| (share(x, &mut rng), share(y, &mut rng)))
        .collect();
    let gf_shares: Vec<_> = gf_pairs
        .iter()
        .map(|&(x, y)| (share(x, &mut rng), share(y, &mut rng)))
        .collect();

    for mode in [SecurityMode::SemiHonest, SecurityMode::MalLite] {
        let out = trio::run(mode, 16, |s| {
            let i = s.party().index();
            let xs: Vec<_> = ring_shares.iter().map(|(x, _)| x[i]).collect();
            let ys: Vec<_> = ring_shares.iter().map(|(_, y)| y[i]).collect();
            let ring_out = rss::mul_vec::<RingEl64>(s, &xs, &ys)?;
            let gxs: Vec<_> = gf_shares.iter().map(|(x, _)| x[i]).collect();
            let gys: Vec<_> = gf_shares.iter().map(|(_, y)| y[i]).collect();
            let gf_out = rss::mul_vec::<Gf128>(s, &gxs, &gys)?;
            Ok((ring_out, gf_out))
        });
        for (k, &(x, y)) in ring_pairs.iter().enumerate() {
            let shares = [out[0].0[k], out[1].0[k], out[2].0[k]];
            assert_eq!(reconstruct(&shares), x.mul(y));
        }
        for (k, &(x, y)) in gf_pairs.iter().enumerate() {
            let shares = [out[0].1[k], out[1].1[k], out[2].1[k]];
            assert_eq!(reconstruct(&shares), x.mul(y));
        }
    }
}

#[test]
fn triple_gen_produces_correct_triples() {
    for mode in [SecurityMode::SemiHonest, SecurityMode::MalLite] {
        let out = trio::run(mode, 17, |s| triple_gen::<RingEl64>(s, 8));
        for k in 0..8 {
            let a = reconstruct(&[out[0][k].a, out[1][k].a, out[2][k].a]);
            let b = reconstruct(&[out[0][k].b, out[1][k].b, out[2][k].b]);
            let c = reconstruct(&[out[0][k].c, out[1][k].c, out[2][k].c]);
            assert_eq!(c, a.mul(b), "triple {k} incorrect in {mode:?}");
        }
        // replication invariant holds on generated shares
        for k in 0..8 {
            assert!(rss::replication_consistent(&[
                out[0][k].c,
                out[1][k].c,
                out[2][k].c
            ]));
        }
    }
}

#[test]
fn triple_gen_zero_count_is_empty() {
    let out = trio::run(SecurityMode::MalLite, 18, |s| triple_gen::<RingEl64>(s, 0));
    assert!(out.iter().all(Vec::is_empty));
}

#[test]
fn sacrifice_detects_additive_error() {
    // Party 2 adds +1 to its additive component during the triple resharing.
    let results = trio::try_run_wrapped(
        SecurityMode::MalLite,
        SessionOptions::default(),
        19,
        |party, transport| {
            if party.number() == 2 {
                Box::new(trio::Tamper::new(transport, |_, tag, payload: &mut Vec<u8>| {
                    if tag == MsgTag::Reshare && payload.len() >= 8 {
                        let v = u64::from_le_bytes(payload[..8].try_into().unwrap());
                        payload[..8].copy_from_slice(&v.wrapping_add(1).to_le_bytes());
                    }
                }))
            } else {
                transport
            }
        },
        |s| triple_gen::<RingEl64>(s, 4),
    );
    assert!(
        results
            .iter()
            .any(|r| matches!(r, Err(MpcError::PreprocessingCorrupt))),
        "sacrifice did not detect the corrupted triple: {:?}",
        results.iter().map(|r| r.is_ok()).collect::<Vec<_>>()
    );
}

#[test]
fn mul_consumes_exactly_one_triple_each() {
    let xs = deal(RingEl64(5), 40);
    let ys = deal(RingEl64(6), 41);
    trio::run(SecurityMode::SemiHonest, 20, |s| {
        let i = s.party().index();
        s.ensure_triples::<RingEl64>(3)?;
        let before = s.counters().triples_consumed;
        let t = s.take_triples::<RingEl64>(1)?.pop().unwrap();
        mul_beaver(s, xs[i], ys[i], t)?;
        assert_eq!(s.counters().triples_consumed, before + 1);
        Ok(())
    });
}

#[test]
fn gf128_verification_accepts_honest_products() {
    let mut rng = StdRng::seed_from_u64(50);
    let n = 64;
    let witnesses: Vec<_> = (0..n)
        .map(|_| {
            let u = Gf128(rng.gen());
            let v = Gf128(rng.gen());
            let w = u.mul(v);
            (share(u, &mut rng), share(v, &mut rng), share(w, &mut rng))
        })
        .collect();
    trio::run(SecurityMode::MalLite, 21, |s| {
        let i = s.party().index();
        let batch: Vec<ProductWitness> = witnesses
            .iter()
            .map(|(u, v, w)| ProductWitness {
                u: u[i],
                v: v[i],
                w: w[i],
            })
            .collect();
        rss::verify_gf128_products(s, &batch)
    });
}

#[test]
fn gf128_verification_rejects_perturbed_product() {
    // 100 trials, each with one product perturbed by a random nonzero delta:
    // expect 100 aborts.
    let mut rng = StdRng::seed_from_u64(51);
    for trial in 0..100 {
        let u = Gf128(rng.gen());
        let v = Gf128(rng.gen());
        let mut delta = Gf128(rng.gen());
        if delta.is_zero() {
            delta = Gf128::ONE;
        }
        let w = u.mul(v).add(delta);
        let us = share(u, &mut rng);
        let vs = share(v, &mut rng);
        let ws = share(w, &mut rng);
        let results = trio::try_run(SecurityMode::MalLite, 2000 + trial, |s| {
            let i = s.party().index();
            rss::verify_gf128_products(
                s,
                &[ProductWitness {
                    u: us[i],
                    v: vs[i],
                    w: ws[i],
                }],
            )
        });
        assert!(
            results
                .iter()
                .all(|r| matches!(r, Err(MpcError::MulVerifyFailed))),
            "trial {trial} did not abort"
        );
    }
}

#[test]
fn gf128_verification_empty_batch_ok() {
    trio::run(SecurityMode::MalLite, 22, |s| {
        rss::verify_gf128_products(s, &[])
    });
}

#[test]
fn explicit_triples_round_trip_via_mul_with_triples() {
    // Deal a correct triple by hand and use it for one multiplication.
    let mut rng = StdRng::seed_from_u64(60);
    let a = RingEl64(rng.gen());
    let b = RingEl64(rng.gen());
    let (x, y) = (RingEl64(rng.gen()), RingEl64(rng.gen()));
    let tas = share(a, &mut rng);
    let tbs = share(b, &mut rng);
    let tcs = share(a.mul(b), &mut rng);
    let xs = share(x, &mut rng);
    let ys = share(y, &mut rng);
    let out = trio::run(SecurityMode::SemiHonest, 23, |s| {
        let i = s.party().index();
        let t = BeaverTriple {
            a: tas[i],
            b: tbs[i],
            c: tcs[i],
        };
        mul_with_triples(s, &[xs[i]], &[ys[i]], vec![t]).map(|mut v| v.pop().unwrap())
    });
    assert_eq!(reconstruct(&out), x.mul(y));
}

#[test]
fn coin_agrees_across_parties() {
    let coins = trio::run(SecurityMode::MalLite, 24, |s| rss::coin::<Gf128>(s));
    assert_eq!(coins[0], coins[1]);
    assert_eq!(coins[1], coins[2]);
    assert!(!coins[0].is_zero());
}

#[test]
fn single_party_view_is_secret_independent() {
    // Per-byte histogram of party 1's received opening payloads over many
    // multiplications, fixed secret vs fresh random secrets. A chi-squared
    // two-sample statistic across 256 bins acts as a regression guard.
    fn observe(secrets: &[(u64, u64)], tag_base: u64) -> [u64; 256] {
        let hist = Arc::new(Mutex::new([0u64; 256]));
        for (run, &(x, y)) in secrets.iter().enumerate() {
            let mut rng = StdRng::seed_from_u64(tag_base * 1_000_003 + run as u64);
            let xs = share(RingEl64(x), &mut rng);
            let ys = share(RingEl64(y), &mut rng);
            let results = trio::try_run_wrapped(
                SecurityMode::SemiHonest,
                SessionOptions::default(),
                tag_base * 7_919 + run as u64,
                |party, transport| {
                    if party.number() != 1 {
                        let hist = Arc::clone(&hist);
                        Box::new(trio::Tamper::new(
                            transport,
                            move |to, tag, payload: &mut Vec<u8>| {
                                if to.number() == 1 && tag == MsgTag::OpenOwn {
                                    let mut h = hist.lock().unwrap();
                                    for &b in payload.iter() {
                                        h[b as usize] += 1;
                                    }
                                }
                            },
                        ))
                    } else {
                        transport
                    }
                },
                |s| {
                    let i = s.party().index();
                    rss::mul_vec::<RingEl64>(s, &[xs[i]], &[ys[i]])
                },
            );
            assert!(results.iter().all(|r| r.is_ok()));
        }
        let h = *hist.lock().unwrap();
        h
    }

    let n = 1000;
    let fixed: Vec<(u64, u64)> = (0..n).map(|_| (0x1122_3344_5566_7788, 0x99aa)).collect();
    let mut rng = StdRng::seed_from_u64(77);
    let random: Vec<(u64, u64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let h1 = observe(&fixed, 1);
    let h2 = observe(&random, 2);
    let chi2: f64 = (0..256)
        .map(|b| {
            let (a, c) = (h1[b] as f64, h2[b] as f64);
            if a + c == 0.0 {
                0.0
            } else {
                (a - c).powi(2) / (a + c)
            }
        })
        .sum();
    // 255 degrees of freedom; mean 255, generous sanity threshold.
    assert!(
        chi2 < 400.0,
        "transcript byte distribution depends on the secret: chi2 = {chi2}"
    );
}
