//! Concrete realization of allocations as MDS-coded payload fragments.
//!
//! Each version is coded on its own with dimension `denom`; a server that is
//! allocated `count` symbols of version `u` stores the symbols with global
//! indices `server * slots_per_server + (0..count)`.

pub mod gf;
pub mod mds;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::allocation::AllocationRule;
use crate::error::{Error, Result};
use crate::model::{latest_complete, side_view_unchecked, Params, SystemState, VersionId};
pub use gf::{Gf16, FIELD_ORDER};
pub use mds::{mds_decode, mds_encode, MdsSpec};

/// One coded fragment of one version.
///
/// Serializes as the triple `[version, index, "hex payload"]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "(u32, u32, String)", try_from = "(u32, u32, String)")]
pub struct CodedSymbol {
    pub version: VersionId,
    pub index: u32,
    pub payload: Vec<Gf16>,
}

impl From<CodedSymbol> for (u32, u32, String) {
    fn from(s: CodedSymbol) -> Self {
        let bytes: Vec<u8> = s.payload.iter().flat_map(|e| e.0.to_be_bytes()).collect();
        (s.version.get(), s.index, hex::encode(bytes))
    }
}

impl TryFrom<(u32, u32, String)> for CodedSymbol {
    type Error = Error;

    fn try_from((version, index, payload): (u32, u32, String)) -> Result<Self> {
        let bytes = hex::decode(&payload)
            .map_err(|e| Error::StateFormat(format!("symbol {index}: bad hex payload: {e}")))?;
        if bytes.len() % 2 != 0 {
            return Err(Error::StateFormat(format!(
                "symbol {index}: payload has an odd number of bytes"
            )));
        }
        if version == 0 {
            return Err(Error::StateFormat(format!("symbol {index}: version 0")));
        }
        Ok(CodedSymbol {
            version: VersionId(version),
            index,
            payload: bytes
                .chunks(2)
                .map(|b| Gf16(u16::from_be_bytes([b[0], b[1]])))
                .collect(),
        })
    }
}

/// Everything one server stores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerStore {
    pub server: usize,
    /// Total payload size in bits.
    pub bits: u64,
    pub symbols: Vec<CodedSymbol>,
}

impl ServerStore {
    pub fn empty(server: usize) -> Self {
        ServerStore {
            server,
            bits: 0,
            symbols: Vec::new(),
        }
    }

    pub fn payload_bits(&self) -> u64 {
        self.symbols.iter().map(|s| 16 * s.payload.len() as u64).sum()
    }
}

/// How a `K`-bit message maps onto `denom` symbols of field elements.
///
/// `K` is padded with zero bits up to a multiple of `16 * denom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolLayout {
    pub k_bits: u64,
    pub denom: u64,
    pub symbol_len: usize,
}

impl SymbolLayout {
    pub fn new(k_bits: u64, denom: u64) -> Self {
        let per = 16 * denom;
        SymbolLayout {
            k_bits,
            denom,
            symbol_len: k_bits.div_ceil(per).max(1) as usize,
        }
    }

    pub fn mds(&self) -> MdsSpec {
        MdsSpec {
            k: self.denom as usize,
            symbol_len: self.symbol_len,
        }
    }

    pub fn message_bytes(&self) -> usize {
        self.k_bits.div_ceil(8) as usize
    }

    pub fn symbol_bits(&self) -> u64 {
        16 * self.symbol_len as u64
    }

    pub fn padded_bits(&self) -> u64 {
        self.symbol_bits() * self.denom
    }

    pub fn pack(&self, message: &[u8]) -> Result<Vec<Gf16>> {
        if message.len() != self.message_bytes() {
            return Err(Error::LengthMismatch {
                expected: self.message_bytes(),
                got: message.len(),
            });
        }
        let mut bytes = message.to_vec();
        mask_tail(&mut bytes, self.k_bits);
        bytes.resize(2 * self.mds().message_len(), 0);
        Ok(bytes
            .chunks(2)
            .map(|b| Gf16(u16::from_be_bytes([b[0], b[1]])))
            .collect())
    }

    pub fn unpack(&self, elems: &[Gf16]) -> Vec<u8> {
        let mut bytes: Vec<u8> = elems.iter().flat_map(|e| e.0.to_be_bytes()).collect();
        bytes.truncate(self.message_bytes());
        mask_tail(&mut bytes, self.k_bits);
        bytes
    }
}

/// Clears the bits past `k_bits` in the last byte.
pub fn mask_tail(bytes: &mut [u8], k_bits: u64) {
    let rem = (k_bits % 8) as u32;
    if rem != 0 {
        if let Some(last) = bytes.last_mut() {
            *last &= 0xFFu8 << (8 - rem);
        }
    }
}

pub fn layout_for<R: AllocationRule + ?Sized>(rule: &R, p: &Params) -> SymbolLayout {
    SymbolLayout::new(p.k_bits, rule.denom(p))
}

/// Payloads keyed by version.
pub type Messages = BTreeMap<VersionId, Vec<u8>>;

fn check_universe<R: AllocationRule + ?Sized>(rule: &R, p: &Params) -> Result<()> {
    let needed = p.n as u64 * rule.slots_per_server(p);
    if needed > FIELD_ORDER {
        return Err(Error::IndexOutOfRange {
            index: needed - 1,
            universe: FIELD_ORDER,
        });
    }
    Ok(())
}

/// Encodes server `i`'s store from the messages it has received.
///
/// `messages` must hold exactly the versions in `S(i)`.
pub fn server_encode<R: AllocationRule + ?Sized>(
    rule: &R,
    s: &SystemState,
    i: usize,
    messages: &Messages,
    p: &Params,
) -> Result<ServerStore> {
    rule.check_regime(p)?;
    p.check_server(i)?;
    s.validate(p)?;
    check_universe(rule, p)?;
    let held = s.get(i);
    let supplied: BTreeSet<VersionId> = messages.keys().copied().collect();
    let expected: BTreeSet<VersionId> = held.iter().collect();
    if supplied != expected {
        return Err(Error::MessageSet(format!(
            "server {i} holds {:?} but messages were supplied for {:?}",
            expected.iter().map(|u| u.get()).collect::<Vec<_>>(),
            supplied.iter().map(|u| u.get()).collect::<Vec<_>>()
        )));
    }
    encode_unchecked(rule, s, i, messages, p)
}

fn encode_unchecked<R: AllocationRule + ?Sized>(
    rule: &R,
    s: &SystemState,
    i: usize,
    messages: &Messages,
    p: &Params,
) -> Result<ServerStore> {
    let alloc = rule.allocate(&side_view_unchecked(s, i, p), p);
    let layout = layout_for(rule, p);
    let slots = rule.slots_per_server(p);
    let mut store = ServerStore::empty(i);
    for (u, count) in alloc.entries() {
        let msg = messages.get(&u).ok_or_else(|| {
            Error::MessageSet(format!("allocation for {u} at server {i}, which never received it"))
        })?;
        let base = i as u64 * slots;
        let indices: Vec<u32> = (0..count).map(|slot| (base + slot) as u32).collect();
        let payloads = mds_encode(&layout.pack(msg)?, &layout.mds(), &indices)?;
        store
            .symbols
            .extend(indices.into_iter().zip(payloads).map(|(index, payload)| CodedSymbol {
                version: u,
                index,
                payload,
            }));
    }
    store.bits = store.payload_bits();
    Ok(store)
}

/// Stores for all servers, each fed only the versions it received.
pub fn encode_all<R: AllocationRule + ?Sized>(
    rule: &R,
    s: &SystemState,
    all: &Messages,
    p: &Params,
) -> Result<Vec<ServerStore>> {
    rule.check_regime(p)?;
    s.validate(p)?;
    check_universe(rule, p)?;
    (0..p.n)
        .map(|i| {
            let own: Messages = s
                .get(i)
                .iter()
                .map(|u| {
                    all.get(&u)
                        .map(|m| (u, m.clone()))
                        .ok_or_else(|| Error::MessageSet(format!("no payload for {u}")))
                })
                .collect::<Result<_>>()?;
            encode_unchecked(rule, s, i, &own, p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub version: VersionId,
    pub payload: Vec<u8>,
}

/// Reads the stores of the servers in `read_set` and returns some version
/// `m >= L_S` with its payload, or `None` when no version is complete.
///
/// Candidates are tried from `nu` down to `L_S`; the first with at least
/// `denom` distinct symbols among the read stores is decoded.
pub fn quorum_decode<R: AllocationRule + ?Sized>(
    rule: &R,
    s: &SystemState,
    read_set: &[usize],
    stores: &[ServerStore],
    p: &Params,
) -> Result<Option<Decoded>> {
    if read_set.len() != p.c_r {
        return Err(Error::InvalidParams(format!(
            "read set has {} servers, c_R = {}",
            read_set.len(),
            p.c_r
        )));
    }
    let distinct: BTreeSet<usize> = read_set.iter().copied().collect();
    if distinct.len() != read_set.len() {
        return Err(Error::InvalidParams("read set repeats a server".into()));
    }
    for &t in read_set {
        p.check_server(t)?;
        match stores.get(t) {
            Some(st) if st.server == t => {}
            _ => {
                return Err(Error::StateFormat(format!("no store supplied for server {t}")));
            }
        }
    }
    let Some(floor) = latest_complete(s, p) else {
        return Ok(None);
    };
    let layout = layout_for(rule, p);
    let spec = layout.mds();
    for m in (floor.get()..=p.nu).rev().map(VersionId) {
        let symbols: Vec<CodedSymbol> = read_set
            .iter()
            .flat_map(|&t| stores[t].symbols.iter().filter(|x| x.version == m).cloned())
            .collect();
        let indices: BTreeSet<u32> = symbols.iter().map(|x| x.index).collect();
        if indices.len() >= spec.k {
            let elems = mds_decode(&symbols, &spec)?;
            return Ok(Some(Decoded {
                version: m,
                payload: layout.unpack(&elems),
            }));
        }
    }
    Err(Error::Contract(format!(
        "no version >= {floor} decodable from read set {read_set:?}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::Scheme;
    use crate::model::VersionSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(raw: &[&[u32]]) -> SystemState {
        SystemState::try_from(raw.iter().map(|v| v.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_messages(p: &Params, seed: u64) -> Messages {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bytes = p.k_bits.div_ceil(8) as usize;
        p.versions()
            .map(|u| {
                let mut m: Vec<u8> = (0..bytes).map(|_| rng.gen()).collect();
                mask_tail(&mut m, p.k_bits);
                (u, m)
            })
            .collect()
    }

    fn restrict(all: &Messages, held: VersionSet) -> Messages {
        held.iter().map(|u| (u, all[&u].clone())).collect()
    }

    #[test]
    fn layout_padding() {
        let l = SymbolLayout::new(1024, 16);
        assert_eq!(l.symbol_len, 4);
        assert_eq!(l.padded_bits(), 1024);
        let l = SymbolLayout::new(1000, 16);
        assert_eq!(l.padded_bits(), 1024);
        let l = SymbolLayout::new(13, 2);
        assert_eq!(l.symbol_len, 1);
        let packed = l.pack(&[0xAB, 0xFF]).unwrap();
        assert_eq!(l.unpack(&packed), vec![0xAB, 0xF8]);
    }

    #[test]
    fn c1_store_when_threshold_met() {
        let p = Params::new(6, 5, 5, 2, 2, 1024).unwrap();
        let s = state(&[&[1, 2], &[1, 2], &[1, 2], &[1, 2], &[1, 2], &[]]);
        let all = random_messages(&p, 1);
        let st = server_encode(&Scheme::C1, &s, 0, &restrict(&all, s.get(0)), &p).unwrap();
        let v2 = st.symbols.iter().filter(|x| x.version == VersionId(2)).count();
        let v1 = st.symbols.iter().filter(|x| x.version == VersionId(1)).count();
        assert_eq!((v2, v1), (4, 2));
        assert_eq!(st.bits, 6 * 1024 / 16);
        assert_eq!(st.bits, st.payload_bits());
    }

    #[test]
    fn empty_server_stores_nothing() {
        let p = Params::new(6, 5, 5, 2, 2, 1024).unwrap();
        let s = state(&[&[], &[1, 2], &[1, 2], &[1, 2], &[1, 2], &[]]);
        for scheme in [Scheme::C1, Scheme::C2] {
            let st = server_encode(&scheme, &s, 0, &Messages::new(), &p).unwrap();
            assert!(st.symbols.is_empty());
            assert_eq!(st.bits, 0);
        }
    }

    #[test]
    fn c2_store() {
        let p = Params::new(8, 7, 7, 3, 3, 1024).unwrap();
        let s = state(&[&[1, 2], &[1, 2], &[1, 2], &[1, 2], &[1, 2], &[1, 2], &[1, 2], &[3]]);
        let all = random_messages(&p, 2);
        let st = server_encode(&Scheme::C2, &s, 0, &restrict(&all, s.get(0)), &p).unwrap();
        assert_eq!(st.symbols.len(), 1);
        assert_eq!(st.symbols[0].version, VersionId(2));
        assert_eq!(st.bits, 512);
    }

    #[test]
    fn encoder_only_takes_received_versions() {
        let p = Params::new(6, 5, 5, 2, 2, 64).unwrap();
        let s = state(&[&[1], &[1], &[1], &[1], &[1], &[1]]);
        let all = random_messages(&p, 3);
        let err = server_encode(&Scheme::C1, &s, 0, &all, &p).unwrap_err();
        assert!(matches!(err, Error::MessageSet(_)));
        let err = server_encode(&Scheme::C1, &s, 0, &Messages::new(), &p).unwrap_err();
        assert!(matches!(err, Error::MessageSet(_)));
    }

    #[test]
    fn quorum_decode_version_two_in_s1() {
        let p = Params::new(6, 5, 5, 2, 2, 1024).unwrap();
        let s1 = state(&[&[1, 2], &[1, 2], &[1, 2], &[1, 2], &[1, 2], &[]]);
        let all = random_messages(&p, 4);
        let stores = encode_all(&Scheme::C1, &s1, &all, &p).unwrap();
        let got = quorum_decode(&Scheme::C1, &s1, &[0, 1, 2, 3, 5], &stores, &p)
            .unwrap()
            .unwrap();
        assert_eq!(got.version, VersionId(2));
        assert_eq!(got.payload, all[&VersionId(2)]);
    }

    #[test]
    fn quorum_decode_null_without_complete_version() {
        let p = Params::new(6, 5, 5, 2, 2, 256).unwrap();
        let s = SystemState::empty(6);
        let all = random_messages(&p, 5);
        for scheme in [Scheme::C1, Scheme::C2] {
            let stores = encode_all(&scheme, &s, &all, &p).unwrap();
            assert_eq!(quorum_decode(&scheme, &s, &[0, 1, 2, 3, 4], &stores, &p).unwrap(), None);
        }
    }

    #[test]
    fn quorum_decode_s2_any_later_version() {
        let p = Params::new(6, 5, 5, 2, 2, 1024).unwrap();
        let s2 = state(&[&[1, 2], &[1, 2], &[1, 2], &[1, 2], &[1], &[]]);
        let all = random_messages(&p, 6);
        let stores = encode_all(&Scheme::C1, &s2, &all, &p).unwrap();
        for t in [[0, 1, 2, 3, 4], [1, 2, 3, 4, 5], [0, 2, 3, 4, 5]] {
            let got = quorum_decode(&Scheme::C1, &s2, &t, &stores, &p).unwrap().unwrap();
            assert!(got.version >= VersionId(1));
            assert_eq!(got.payload, all[&got.version]);
        }
    }

    #[test]
    fn quorum_decode_rejects_wrong_read_set() {
        let p = Params::new(6, 5, 5, 2, 2, 64).unwrap();
        let s = SystemState::empty(6);
        let stores: Vec<_> = (0..6).map(ServerStore::empty).collect();
        assert!(quorum_decode(&Scheme::C1, &s, &[0, 1], &stores, &p).is_err());
        assert!(quorum_decode(&Scheme::C1, &s, &[0, 0, 1, 2, 3], &stores, &p).is_err());
    }

    #[test]
    fn global_indices_are_disjoint() {
        let p = Params::new(6, 5, 5, 2, 2, 64).unwrap();
        let s = SystemState::uniform(6, VersionSet::from([1, 2]));
        let all = random_messages(&p, 8);
        let stores = encode_all(&Scheme::C1, &s, &all, &p).unwrap();
        let mut seen = BTreeSet::new();
        for st in &stores {
            for x in &st.symbols {
                assert!(seen.insert((x.version, x.index)));
            }
        }
    }

    #[test]
    fn store_json_triples() {
        let sym = CodedSymbol {
            version: VersionId(2),
            index: 5,
            payload: vec![Gf16(0xBEEF), Gf16(0x0001)],
        };
        let st = ServerStore {
            server: 3,
            bits: 32,
            symbols: vec![sym],
        };
        let text = serde_json::to_string(&st).unwrap();
        assert_eq!(text, r#"{"server":3,"bits":32,"symbols":[[2,5,"beef0001"]]}"#);
        assert_eq!(serde_json::from_str::<ServerStore>(&text).unwrap(), st);
        assert!(serde_json::from_str::<ServerStore>(r#"{"server":3,"bits":32,"symbols":[[2,5,"bee"]]}"#).is_err());
    }
}
