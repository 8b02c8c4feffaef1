//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except for plain data types.

#![allow(dead_code, clippy::needless_range_loop)]

use std::cmp::Ordering;
use std::collections::BTreeSet;

use scint_core::SeverityClass;

/// Non-negative rational with i128 parts, kept in lowest terms.
#[derive(Debug, Clone, Copy)]
pub struct Frac {
    pub num: i128,
    pub den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Frac {
    pub fn new(num: i128, den: i128) -> Self {
        assert!(den > 0);
        let g = gcd(num, den).max(1);
        Frac {
            num: num / g,
            den: den / g,
        }
    }

    pub fn zero() -> Self {
        Frac { num: 0, den: 1 }
    }

    pub fn add(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    pub fn sub(self, o: Frac) -> Frac {
        Frac::new(self.num * o.den - o.num * self.den, self.den * o.den)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Frac {
    fn eq(&self, o: &Self) -> bool {
        self.num * o.den == o.num * self.den
    }
}
impl Eq for Frac {}
impl PartialOrd for Frac {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Frac {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }
}

/// `n * gini` of a node with the given labels: n − Σ cₖ² / n.
pub fn weighted_gini(labels: &[u8]) -> Frac {
    let n = labels.len() as i128;
    if n == 0 {
        return Frac::zero();
    }
    let mut c = [0i128; 3];
    for &l in labels {
        c[(l - 1) as usize] += 1;
    }
    Frac::new(n * n - c.iter().map(|k| k * k).sum::<i128>(), n)
}

/// Every training impurity (Σ over leaves of n·gini) reachable by best-first
/// growth when ties between equally good splits are broken in every possible
/// way. Thresholds sit between consecutive distinct values of a feature.
pub fn greedy_impurities(x: &[Vec<i64>], y: &[u8], max_splits: usize) -> BTreeSet<(i128, i128)> {
    let all: Vec<usize> = (0..y.len()).collect();
    let mut out = BTreeSet::new();
    explore(x, y, vec![all], max_splits, &mut out);
    out
}

fn leaf_total(y: &[u8], leaves: &[Vec<usize>]) -> Frac {
    leaves.iter().fold(Frac::zero(), |acc, l| {
        let labels: Vec<u8> = l.iter().map(|&i| y[i]).collect();
        acc.add(weighted_gini(&labels))
    })
}

fn explore(x: &[Vec<i64>], y: &[u8], leaves: Vec<Vec<usize>>, budget: usize, out: &mut BTreeSet<(i128, i128)>) {
    let total = leaf_total(y, &leaves);
    if budget == 0 {
        out.insert((total.num, total.den));
        return;
    }
    // (gain, leaf, left rows, right rows)
    let mut cands: Vec<(Frac, usize, Vec<usize>, Vec<usize>)> = Vec::new();
    for (li, leaf) in leaves.iter().enumerate() {
        let parent = weighted_gini(&leaf.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let n_features = x.first().map_or(0, |r| r.len());
        for f in 0..n_features {
            let values: BTreeSet<i64> = leaf.iter().map(|&i| x[i][f]).collect();
            for &v in values.iter().skip(1) {
                let (l, r): (Vec<usize>, Vec<usize>) = leaf.iter().partition(|&&i| x[i][f] < v);
                let gl = weighted_gini(&l.iter().map(|&i| y[i]).collect::<Vec<_>>());
                let gr = weighted_gini(&r.iter().map(|&i| y[i]).collect::<Vec<_>>());
                cands.push((parent.sub(gl).sub(gr), li, l, r));
            }
        }
    }
    let best = cands.iter().map(|c| c.0).max();
    match best {
        Some(g) if g > Frac::zero() => {
            for (gain, li, l, r) in cands.into_iter().filter(|c| c.0 == g) {
                debug_assert!(gain == g);
                let mut next: Vec<Vec<usize>> = leaves
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != li)
                    .map(|(_, v)| v.clone())
                    .collect();
                next.push(l);
                next.push(r);
                explore(x, y, next, budget - 1, out);
            }
        }
        _ => {
            out.insert((total.num, total.den));
        }
    }
}

/// Exact n·gini summed over the cells of a partition given as a leaf key per row.
pub fn partition_impurity<K: Ord + Clone>(keys: &[K], y: &[u8]) -> Frac {
    let mut groups: std::collections::BTreeMap<K, Vec<u8>> = Default::default();
    for (k, &l) in keys.iter().zip(y) {
        groups.entry(k.clone()).or_default().push(l);
    }
    groups.values().fold(Frac::zero(), |acc, g| acc.add(weighted_gini(g)))
}

/// Brute-force k-NN: sort every exemplar by (squared distance, index), keep
/// the first k and vote with weight 1/d². Exact matches vote alone with
/// weight one. Ties between classes go to the lowest label.
pub fn knn_brute(exemplars: &[Vec<f64>], labels: &[u8], query: &[f64], k: usize) -> u8 {
    let mut d: Vec<(f64, usize)> = exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| (e.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum(), i))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let near = &d[..k];
    let mut votes = [0.0f64; 3];
    let exact = near.iter().any(|(d2, _)| *d2 == 0.0);
    for &(d2, i) in near {
        let w = if exact {
            if d2 == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 / d2
        };
        votes[(labels[i] - 1) as usize] += w;
    }
    let mut best = 0;
    for c in 1..3 {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    best as u8 + 1
}

/// Maximum of `f` over the integer box `[lo, hi]²`.
pub fn grid_max(lo: i64, hi: i64, f: impl Fn(i64, i64) -> f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for a in lo..=hi {
        for b in lo..=hi {
            best = best.max(f(a, b));
        }
    }
    best
}

/// Percent accuracy, precisions and recalls counted directly from
/// `(predicted, truth)` pairs.
pub struct PairRates {
    pub accuracy: f64,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
}

pub fn pair_rates(pairs: impl IntoIterator<Item = (u8, u8)>) -> PairRates {
    let (mut n, mut correct) = (0u64, 0u64);
    let mut tp = [0u64; 3];
    let mut pred = [0u64; 3];
    let mut truth = [0u64; 3];
    for (p, t) in pairs {
        n += 1;
        pred[(p - 1) as usize] += 1;
        truth[(t - 1) as usize] += 1;
        if p == t {
            correct += 1;
            tp[(p - 1) as usize] += 1;
        }
    }
    let pct = |a: u64, b: u64| 100.0 * a as f64 / b as f64;
    PairRates {
        accuracy: pct(correct, n),
        precision: [0, 1, 2].map(|c| pct(tp[c], pred[c])),
        recall: [0, 1, 2].map(|c| pct(tp[c], truth[c])),
    }
}

/// Expands a `counts[predicted][truth]` table into its labelled pairs.
pub fn expand(counts: [[u64; 3]; 3]) -> Vec<(u8, u8)> {
    let mut v = Vec::new();
    for (p, row) in counts.iter().enumerate() {
        for (t, &n) in row.iter().enumerate() {
            v.extend(std::iter::repeat_n((p as u8 + 1, t as u8 + 1), n as usize));
        }
    }
    v
}

pub fn class(l: u8) -> SeverityClass {
    SeverityClass::try_from(l).unwrap()
}

/// Small deterministic generator so the oracles do not share the crate's RNG.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
