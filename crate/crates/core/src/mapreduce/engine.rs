use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::registry::{MapFn, ReduceFn};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KvPair {
    pub key: Vec<u8>,
    pub value: Vec<u8>,
}

impl KvPair {
    pub fn new(key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Self {
        KvPair {
            key: key.into(),
            value: value.into(),
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn partition_of(key: &[u8], num_reduces: u32) -> u32 {
    (fnv1a64(key) % num_reduces as u64) as u32
}

/// Collects a map function's output for one task.
#[derive(Debug, Default)]
pub struct Emitter {
    pairs: Vec<KvPair>,
    counters: BTreeMap<String, u64>,
}

impl Emitter {
    pub fn emit(&mut self, key: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) {
        self.pairs.push(KvPair::new(key, value));
    }

    pub fn count(&mut self, counter: &str, by: u64) {
        *self.counters.entry(counter.to_string()).or_default() += by;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapOutput {
    /// One spill per reduce, each sorted by key with emission order kept
    /// among equal keys.
    pub partitions: Vec<Vec<KvPair>>,
    pub counters: BTreeMap<String, u64>,
}

pub fn run_map<'a>(
    records: impl IntoIterator<Item = &'a [u8]>,
    map_fn: MapFn,
    num_reduces: u32,
) -> Result<MapOutput, String> {
    let mut em = Emitter::default();
    for r in records {
        map_fn(r, &mut em)?;
    }
    let mut partitions = vec![Vec::new(); num_reduces as usize];
    for kv in em.pairs {
        partitions[partition_of(&kv.key, num_reduces) as usize].push(kv);
    }
    for p in &mut partitions {
        p.sort_by(|a, b| a.key.cmp(&b.key));
    }
    Ok(MapOutput {
        partitions,
        counters: em.counters,
    })
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("truncated spill at byte {0}")]
pub struct SpillError(pub usize);

/// Spill format: repeated `u32 BE key length, key, u32 BE value length, value`.
pub fn encode_spill(pairs: &[KvPair]) -> Vec<u8> {
    let mut out = Vec::new();
    for kv in pairs {
        out.extend_from_slice(&(kv.key.len() as u32).to_be_bytes());
        out.extend_from_slice(&kv.key);
        out.extend_from_slice(&(kv.value.len() as u32).to_be_bytes());
        out.extend_from_slice(&kv.value);
    }
    out
}

pub fn decode_spill(bytes: &[u8]) -> Result<Vec<KvPair>, SpillError> {
    fn field<'a>(bytes: &'a [u8], at: &mut usize) -> Result<&'a [u8], SpillError> {
        let start = *at;
        let len: [u8; 4] = bytes
            .get(start..start + 4)
            .and_then(|s| s.try_into().ok())
            .ok_or(SpillError(start))?;
        let len = u32::from_be_bytes(len) as usize;
        let body = bytes.get(start + 4..start + 4 + len).ok_or(SpillError(start))?;
        *at = start + 4 + len;
        Ok(body)
    }
    let mut out = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let key = field(bytes, &mut at)?.to_vec();
        let value = field(bytes, &mut at)?.to_vec();
        out.push(KvPair { key, value });
    }
    Ok(out)
}

/// K-way merge of sorted spills given in map-index order. Equal keys come
/// out by spill index, then by position within the spill.
pub fn merge_spills(spills: Vec<Vec<KvPair>>) -> Vec<KvPair> {
    let total = spills.iter().map(Vec::len).sum();
    let mut iters: Vec<_> = spills.into_iter().map(Vec::into_iter).collect();
    let mut heap = BinaryHeap::new();
    for (i, it) in iters.iter_mut().enumerate() {
        if let Some(kv) = it.next() {
            heap.push(Reverse((kv.key, i, kv.value)));
        }
    }
    let mut out = Vec::with_capacity(total);
    while let Some(Reverse((key, i, value))) = heap.pop() {
        out.push(KvPair { key, value });
        if let Some(kv) = iters[i].next() {
            heap.push(Reverse((kv.key, i, kv.value)));
        }
    }
    out
}

/// Applies `reduce_fn` once per key group of a sorted stream and renders
/// `key \t value \n` lines.
pub fn run_reduce(stream: &[KvPair], reduce_fn: ReduceFn) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < stream.len() {
        let key = &stream[i].key;
        let j = i + stream[i..].iter().take_while(|kv| &kv.key == key).count();
        let values: Vec<&[u8]> = stream[i..j].iter().map(|kv| kv.value.as_slice()).collect();
        let v = reduce_fn(key, &values)?;
        out.extend_from_slice(key);
        out.push(b'\t');
        out.extend_from_slice(&v);
        out.push(b'\n');
        i = j;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(line: &[u8], em: &mut Emitter) -> Result<(), String> {
        for w in line.split(|&b| b == b' ').filter(|w| !w.is_empty()) {
            em.emit(w, "1");
        }
        Ok(())
    }

    fn sum(_k: &[u8], vs: &[&[u8]]) -> Result<Vec<u8>, String> {
        let mut t = 0i64;
        for v in vs {
            t += std::str::from_utf8(v).unwrap().parse::<i64>().unwrap();
        }
        Ok(t.to_string().into_bytes())
    }

    #[test]
    fn fnv_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn map_sorts_single_partition() {
        let out = run_map([&b"a b a"[..]], words, 1).unwrap();
        let keys: Vec<&[u8]> = out.partitions[0].iter().map(|kv| kv.key.as_slice()).collect();
        assert_eq!(keys, vec![&b"a"[..], b"a", b"b"]);
    }

    #[test]
    fn merge_orders_ties_by_spill_index() {
        let s0 = vec![KvPair::new("a", "1"), KvPair::new("b", "2")];
        let s1 = vec![KvPair::new("a", "3")];
        let m = merge_spills(vec![s0, s1]);
        assert_eq!(m, vec![KvPair::new("a", "1"), KvPair::new("a", "3"), KvPair::new("b", "2")]);
        assert!(merge_spills(Vec::new()).is_empty());
    }

    #[test]
    fn reduce_renders_lines() {
        let stream = merge_spills(vec![
            vec![KvPair::new("a", "1"), KvPair::new("b", "2")],
            vec![KvPair::new("a", "3")],
        ]);
        assert_eq!(run_reduce(&stream, sum).unwrap(), b"a\t4\nb\t2\n");
        assert!(run_reduce(&[], sum).unwrap().is_empty());
    }

    #[test]
    fn truncated_spill_is_rejected() {
        let enc = encode_spill(&[KvPair::new("key", "value")]);
        assert_eq!(decode_spill(&enc[..enc.len() - 1]), Err(SpillError(7)));
    }

    fn kv() -> impl Strategy<Value = KvPair> {
        (proptest::collection::vec(any::<u8>(), 0..6), proptest::collection::vec(any::<u8>(), 0..6))
            .prop_map(|(k, v)| KvPair { key: k, value: v })
    }

    proptest! {
        #[test]
        fn spill_round_trip(pairs in proptest::collection::vec(kv(), 0..30)) {
            prop_assert_eq!(decode_spill(&encode_spill(&pairs)).unwrap(), pairs);
        }

        #[test]
        fn partitions_are_total_and_sorted(
            lines in proptest::collection::vec("[a-e ]{0,20}", 0..20),
            r in 1u32..6,
        ) {
            let out = run_map(lines.iter().map(|l| l.as_bytes()), words, r).unwrap();
            prop_assert_eq!(out.partitions.len(), r as usize);
            let mut seen = std::collections::BTreeSet::new();
            for (p, part) in out.partitions.iter().enumerate() {
                prop_assert!(part.windows(2).all(|w| w[0].key <= w[1].key));
                for kv in part {
                    prop_assert_eq!(partition_of(&kv.key, r) as usize, p);
                    seen.insert(kv.key.clone());
                }
            }
            let emitted: std::collections::BTreeSet<Vec<u8>> = lines
                .iter()
                .flat_map(|l| l.split(' ').filter(|w| !w.is_empty()).map(|w| w.as_bytes().to_vec()))
                .collect();
            prop_assert_eq!(seen, emitted);
        }

        #[test]
        fn merge_is_sorted_and_stable(
            spills in proptest::collection::vec(proptest::collection::vec(kv(), 0..10), 0..5),
        ) {
            let sorted: Vec<Vec<KvPair>> = spills
                .into_iter()
                .map(|mut s| { s.sort_by(|a, b| a.key.cmp(&b.key)); s })
                .collect();
            let mut expect: Vec<(Vec<u8>, usize, usize, Vec<u8>)> = sorted
                .iter()
                .enumerate()
                .flat_map(|(i, s)| s.iter().enumerate().map(move |(j, kv)| (kv.key.clone(), i, j, kv.value.clone())))
                .collect();
            expect.sort();
            let merged = merge_spills(sorted);
            let got: Vec<(Vec<u8>, Vec<u8>)> = merged.into_iter().map(|kv| (kv.key, kv.value)).collect();
            let want: Vec<(Vec<u8>, Vec<u8>)> = expect.into_iter().map(|(k, _, _, v)| (k, v)).collect();
            prop_assert_eq!(got, want);
        }
    }
}
