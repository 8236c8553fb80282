//! Systematic Reed-Solomon style MDS code over GF(2^16).
//!
//! A message of `k` chunks is read as the values at points `0..k` of the
//! unique polynomial of degree `< k` through them (column by column); the
//! symbol with index `j` is that polynomial evaluated at point `j`. Indices
//! below `k` are therefore the message chunks verbatim, and any `k` distinct
//! indices determine the message.

use std::collections::BTreeMap;

use super::gf::{Gf16, FIELD_ORDER};
use super::CodedSymbol;
use crate::error::{DecodeError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MdsSpec {
    /// Code dimension, in symbols.
    pub k: usize,
    /// Field elements per symbol.
    pub symbol_len: usize,
}

impl MdsSpec {
    pub fn message_len(&self) -> usize {
        self.k * self.symbol_len
    }
}

fn point(index: u32) -> Gf16 {
    Gf16(index as u16)
}

/// `prod_{l != m} (x_m - x_l)` for each `m`.
fn denominators(xs: &[Gf16]) -> Vec<Gf16> {
    xs.iter()
        .enumerate()
        .map(|(m, &xm)| {
            xs.iter()
                .enumerate()
                .filter(|&(l, _)| l != m)
                .fold(Gf16::ONE, |acc, (_, &xl)| acc * (xm - xl))
        })
        .collect()
}

/// Weights `w` with `f(t) = sum_m w[m] f(xs[m])` for every `f` of degree `< xs.len()`.
fn lagrange_weights(xs: &[Gf16], denoms: &[Gf16], t: Gf16) -> Vec<Gf16> {
    if let Some(hit) = xs.iter().position(|&x| x == t) {
        let mut w = vec![Gf16::ZERO; xs.len()];
        w[hit] = Gf16::ONE;
        return w;
    }
    let all = xs.iter().fold(Gf16::ONE, |acc, &x| acc * (t - x));
    xs.iter()
        .zip(denoms)
        .map(|(&x, &d)| all / ((t - x) * d))
        .collect()
}

fn combine(weights: &[Gf16], chunks: &[&[Gf16]], len: usize) -> Vec<Gf16> {
    let mut out = vec![Gf16::ZERO; len];
    for (&w, chunk) in weights.iter().zip(chunks) {
        if w.is_zero() {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(chunk.iter()) {
            *o += w * v;
        }
    }
    out
}

fn check_indices(indices: &[u32]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(indices.len());
    for &j in indices {
        if j as u64 >= FIELD_ORDER {
            return Err(Error::IndexOutOfRange {
                index: j as u64,
                universe: FIELD_ORDER,
            });
        }
        if !seen.insert(j) {
            return Err(Error::DuplicateIndex(j));
        }
    }
    Ok(())
}

/// Encodes `message` (exactly `spec.message_len()` elements) into one symbol
/// per requested index.
pub fn mds_encode(message: &[Gf16], spec: &MdsSpec, indices: &[u32]) -> Result<Vec<Vec<Gf16>>> {
    if spec.k == 0 {
        return Err(Error::InvalidParams("MDS dimension must be at least 1".into()));
    }
    if message.len() != spec.message_len() {
        return Err(Error::LengthMismatch {
            expected: spec.message_len(),
            got: message.len(),
        });
    }
    check_indices(indices)?;
    let chunks: Vec<&[Gf16]> = message.chunks(spec.symbol_len).collect();
    let xs: Vec<Gf16> = (0..spec.k as u32).map(point).collect();
    let denoms = denominators(&xs);
    Ok(indices
        .iter()
        .map(|&j| {
            if (j as usize) < spec.k {
                chunks[j as usize].to_vec()
            } else {
                combine(&lagrange_weights(&xs, &denoms, point(j)), &chunks, spec.symbol_len)
            }
        })
        .collect())
}

/// Recovers the message from any `k` distinct symbols of one version.
///
/// Repeated indices must carry identical payloads. When more than `k`
/// distinct indices are present, the `k` smallest are used.
pub fn mds_decode(symbols: &[CodedSymbol], spec: &MdsSpec) -> Result<Vec<Gf16>> {
    if let Some(first) = symbols.first() {
        if let Some(other) = symbols.iter().find(|s| s.version != first.version) {
            return Err(Error::MessageSet(format!(
                "decode mixes versions {} and {}",
                first.version, other.version
            )));
        }
    }
    let mut distinct: BTreeMap<u32, &[Gf16]> = BTreeMap::new();
    for s in symbols {
        if s.payload.len() != spec.symbol_len {
            return Err(Error::LengthMismatch {
                expected: spec.symbol_len,
                got: s.payload.len(),
            });
        }
        if s.index as u64 >= FIELD_ORDER {
            return Err(Error::IndexOutOfRange {
                index: s.index as u64,
                universe: FIELD_ORDER,
            });
        }
        match distinct.get(&s.index) {
            Some(prev) if *prev != s.payload.as_slice() => {
                return Err(DecodeError::Inconsistent { index: s.index }.into());
            }
            _ => {
                distinct.insert(s.index, &s.payload);
            }
        }
    }
    if distinct.len() < spec.k {
        return Err(DecodeError::Insufficient {
            have: distinct.len(),
            need: spec.k,
        }
        .into());
    }
    let chosen: Vec<(u32, &[Gf16])> = distinct.into_iter().take(spec.k).collect();
    let xs: Vec<Gf16> = chosen.iter().map(|&(j, _)| point(j)).collect();
    let chunks: Vec<&[Gf16]> = chosen.iter().map(|&(_, d)| d).collect();
    let denoms = denominators(&xs);
    let mut out = Vec::with_capacity(spec.message_len());
    for m in 0..spec.k as u32 {
        match chosen.iter().position(|&(j, _)| j == m) {
            Some(pos) => out.extend_from_slice(chunks[pos]),
            None => out.extend(combine(
                &lagrange_weights(&xs, &denoms, point(m)),
                &chunks,
                spec.symbol_len,
            )),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VersionId;
    use itertools::Itertools;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_message(rng: &mut ChaCha8Rng, len: usize) -> Vec<Gf16> {
        (0..len).map(|_| Gf16(rng.gen())).collect()
    }

    fn symbols(indices: &[u32], payloads: Vec<Vec<Gf16>>) -> Vec<CodedSymbol> {
        indices
            .iter()
            .zip(payloads)
            .map(|(&index, payload)| CodedSymbol {
                version: VersionId(1),
                index,
                payload,
            })
            .collect()
    }

    #[test]
    fn dimension_one_is_repetition() {
        let spec = MdsSpec { k: 1, symbol_len: 5 };
        let msg = random_message(&mut ChaCha8Rng::seed_from_u64(1), 5);
        let out = mds_encode(&msg, &spec, &[0, 7, 300]).unwrap();
        for (j, payload) in [0u32, 7, 300].into_iter().zip(out) {
            assert_eq!(payload, msg);
            let one = symbols(&[j], vec![payload]);
            assert_eq!(mds_decode(&one, &spec).unwrap(), msg);
        }
    }

    #[test]
    fn systematic_prefix() {
        let spec = MdsSpec { k: 2, symbol_len: 3 };
        let a = vec![Gf16(1), Gf16(2), Gf16(3)];
        let b = vec![Gf16(40), Gf16(50), Gf16(60)];
        let msg: Vec<_> = a.iter().chain(&b).copied().collect();
        let out = mds_encode(&msg, &spec, &[0, 1]).unwrap();
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn all_four_subsets_of_eight_decode() {
        // 1024-bit payload = 64 elements = 4 symbols of 16 elements.
        let spec = MdsSpec { k: 4, symbol_len: 16 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let msg = random_message(&mut rng, 64);
        let idx: Vec<u32> = (0..8).collect();
        let all = symbols(&idx, mds_encode(&msg, &spec, &idx).unwrap());
        let mut count = 0;
        for subset in all.iter().cloned().combinations(4) {
            assert_eq!(mds_decode(&subset, &spec).unwrap(), msg);
            count += 1;
        }
        assert_eq!(count, 70);
        for subset in all.iter().cloned().combinations(3) {
            assert_eq!(
                mds_decode(&subset, &spec),
                Err(DecodeError::Insufficient { have: 3, need: 4 }.into())
            );
        }
    }

    #[test]
    fn random_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let k = rng.gen_range(1..=20);
            let spec = MdsSpec {
                k,
                symbol_len: rng.gen_range(1..=6),
            };
            let msg = random_message(&mut rng, spec.message_len());
            let mut idx: Vec<u32> = (0..200).collect();
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.gen_range(0..=i));
            }
            idx.truncate(k);
            let syms = symbols(&idx, mds_encode(&msg, &spec, &idx).unwrap());
            assert_eq!(mds_decode(&syms, &spec).unwrap(), msg);
        }
    }

    #[test]
    fn encode_rejects_bad_indices() {
        let spec = MdsSpec { k: 2, symbol_len: 1 };
        let msg = vec![Gf16(1), Gf16(2)];
        assert_eq!(mds_encode(&msg, &spec, &[3, 3]), Err(Error::DuplicateIndex(3)));
        assert!(matches!(
            mds_encode(&msg, &spec, &[70_000]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            mds_encode(&msg[..1], &spec, &[0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn duplicates_must_agree() {
        let spec = MdsSpec { k: 2, symbol_len: 2 };
        let msg = vec![Gf16(9), Gf16(8), Gf16(7), Gf16(6)];
        let idx = [4, 9];
        let mut syms = symbols(&idx, mds_encode(&msg, &spec, &idx).unwrap());
        syms.push(syms[0].clone());
        assert_eq!(mds_decode(&syms, &spec).unwrap(), msg);

        let mut flipped = syms[0].clone();
        flipped.payload[1].0 ^= 1;
        syms.push(flipped);
        assert_eq!(
            mds_decode(&syms, &spec),
            Err(DecodeError::Inconsistent { index: 4 }.into())
        );
    }

    #[test]
    fn decode_is_order_independent() {
        let spec = MdsSpec { k: 3, symbol_len: 2 };
        let msg = random_message(&mut ChaCha8Rng::seed_from_u64(3), 6);
        let idx = [11, 2, 30, 5];
        let mut syms = symbols(&idx, mds_encode(&msg, &spec, &idx).unwrap());
        let a = mds_decode(&syms, &spec).unwrap();
        syms.reverse();
        assert_eq!(mds_decode(&syms, &spec).unwrap(), a);
        assert_eq!(a, msg);
    }
}
