//! Combinatorial labels of the moment expansion.
//!
//! A summand of the n-th moment is labelled by a triple `(alpha, beta, tau)`:
//!
//! - `alpha in {0,1}^n` marks which of the `n` observation points attach to a
//!   branch variable (the others contribute a bare heat potential),
//! - `beta in {0,1}^{n'}` marks which branch variables attach to an earlier
//!   branch variable (the others start from the initial measure),
//! - `tau` maps the `2n'` kernel slots (first the `|alpha|` observation slots,
//!   then the `|beta|` re-attachment slots) onto branch variables `1..=n'`,
//!   hitting every variable exactly twice.
//!
//! All indices in this module are 1-based to match the usual notation; the
//! `n' = 0` case is represented with empty `beta` and `tau`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest moment order for which explicit enumeration is allowed.
pub const MAX_ENUMERATION_ORDER: usize = 10;

/// Positions (1-based) of the nonzero coordinates of `bits`, in increasing order.
///
/// `iota(bits)[i - 1]` is the position of the i-th one.
pub fn iota(bits: &[u8]) -> Vec<usize> {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b != 0)
        .map(|(j, _)| j + 1)
        .collect()
}

fn weight(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b != 0).count()
}

fn check_orders(n: usize, n_prime: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("moment order n must be positive"));
    }
    if n_prime >= n {
        return Err(invalid(format!("n' = {n_prime} must be at most n - 1 = {}", n - 1)));
    }
    Ok(())
}

/// A multi-index `[alpha, beta]` from `I_{n,n'}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MomentIndexPair {
    n: usize,
    n_prime: usize,
    alpha: Vec<u8>,
    beta: Vec<u8>,
}

impl MomentIndexPair {
    pub fn new(n: usize, n_prime: usize, alpha: Vec<u8>, beta: Vec<u8>) -> Result<Self> {
        check_orders(n, n_prime)?;
        if alpha.len() != n || beta.len() != n_prime {
            return Err(invalid(format!(
                "alpha/beta lengths ({}, {}) do not match (n, n') = ({n}, {n_prime})",
                alpha.len(),
                beta.len()
            )));
        }
        if alpha.iter().chain(&beta).any(|&b| b > 1) {
            return Err(invalid("alpha and beta must be 0/1 vectors"));
        }
        if n_prime > 0 && beta[n_prime - 1] != 0 {
            return Err(invalid("the last coordinate of beta must be 0"));
        }
        if weight(&alpha) + weight(&beta) != 2 * n_prime {
            return Err(invalid("|alpha| + |beta| must equal 2 n'"));
        }
        Ok(Self {
            n,
            n_prime,
            alpha,
            beta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    pub fn alpha(&self) -> &[u8] {
        &self.alpha
    }

    pub fn beta(&self) -> &[u8] {
        &self.beta
    }

    /// `|alpha|`, the number of observation slots in `tau`.
    pub fn alpha_weight(&self) -> usize {
        weight(&self.alpha)
    }
}

/// A map `tau : {1..2n'} -> {1..n'}` from `K^{alpha,beta}_{n,n'}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairingMap {
    tau: Vec<usize>,
}

impl PairingMap {
    /// Checks both defining conditions of `tau` against `pair`.
    pub fn new(pair: &MomentIndexPair, tau: Vec<usize>) -> Result<Self> {
        let n_prime = pair.n_prime;
        if tau.len() != 2 * n_prime {
            return Err(invalid(format!("tau must have length 2n' = {}", 2 * n_prime)));
        }
        let mut hits = vec![0usize; n_prime + 1];
        for &v in &tau {
            if v == 0 || v > n_prime {
                return Err(invalid(format!("tau value {v} outside 1..={n_prime}")));
            }
            hits[v] += 1;
        }
        if hits[1..].iter().any(|&h| h != 2) {
            return Err(invalid("every branch variable must be hit exactly twice"));
        }
        let a = pair.alpha_weight();
        let beta_pos = iota(&pair.beta);
        for (j, &v) in tau[a..].iter().enumerate() {
            if v <= beta_pos[j] {
                return Err(invalid(format!(
                    "tau({}) = {v} must exceed iota_beta({}) = {}",
                    a + j + 1,
                    j + 1,
                    beta_pos[j]
                )));
            }
        }
        Ok(Self { tau })
    }

    pub fn values(&self) -> &[usize] {
        &self.tau
    }
}

/// One element `(alpha, beta, tau)` of `J_{n,n'}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTriple {
    pair: MomentIndexPair,
    tau: PairingMap,
}

impl IndexTriple {
    pub fn new(pair: MomentIndexPair, tau: PairingMap) -> Result<Self> {
        // Re-validate: the pairing may have been built against another pair.
        let tau = PairingMap::new(&pair, tau.tau)?;
        Ok(Self { pair, tau })
    }

    pub fn pair(&self) -> &MomentIndexPair {
        &self.pair
    }

    pub fn tau(&self) -> &PairingMap {
        &self.tau
    }

    pub fn n(&self) -> usize {
        self.pair.n
    }

    pub fn n_prime(&self) -> usize {
        self.pair.n_prime
    }

    pub fn alpha(&self) -> &[u8] {
        &self.pair.alpha
    }

    pub fn beta(&self) -> &[u8] {
        &self.pair.beta
    }

    pub fn tau_values(&self) -> &[usize] {
        &self.tau.tau
    }
}

impl Serialize for IndexTriple {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("IndexTriple", 3)?;
        st.serialize_field("alpha", &self.pair.alpha)?;
        st.serialize_field("beta", &self.pair.beta)?;
        st.serialize_field("tau", &self.tau.tau)?;
        st.end()
    }
}

fn bits_of(code: u64, len: usize) -> Vec<u8> {
    // Most significant bit first, so increasing codes are lexicographic.
    (0..len).map(|i| ((code >> (len - 1 - i)) & 1) as u8).collect()
}

/// All of `I_{n,n'}`, lexicographic in `(alpha, beta)`.
pub fn enumerate_index_pairs(n: usize, n_prime: usize) -> Result<Vec<MomentIndexPair>> {
    check_orders(n, n_prime)?;
    if n > MAX_ENUMERATION_ORDER {
        return Err(invalid(format!(
            "explicit enumeration is limited to n <= {MAX_ENUMERATION_ORDER}"
        )));
    }
    let mut out = Vec::new();
    for a_code in 0..(1u64 << n) {
        let a_weight = a_code.count_ones() as usize;
        if a_weight > 2 * n_prime {
            continue;
        }
        let needed = 2 * n_prime - a_weight;
        for b_code in 0..(1u64 << n_prime) {
            // beta_{n'} = 0 is the lowest bit.
            if b_code & 1 == 1 || b_code.count_ones() as usize != needed {
                continue;
            }
            out.push(MomentIndexPair {
                n,
                n_prime,
                alpha: bits_of(a_code, n),
                beta: bits_of(b_code, n_prime),
            });
        }
    }
    Ok(out)
}

/// All pairing maps for `pair`, lexicographic in the word `tau(1) tau(2) ...`.
///
/// Slots are filled left to right with every admissible value, each value used
/// at most twice; with `2n'` slots and `n'` values this forces exactly two hits.
pub fn enumerate_pairings(pair: &MomentIndexPair) -> Vec<PairingMap> {
    let n_prime = pair.n_prime;
    if n_prime == 0 {
        return vec![PairingMap { tau: Vec::new() }];
    }
    let a = pair.alpha_weight();
    let beta_pos = iota(&pair.beta);
    // Smallest value admissible in each slot.
    let floor: Vec<usize> = (0..2 * n_prime)
        .map(|slot| if slot < a { 1 } else { beta_pos[slot - a] + 1 })
        .collect();

    let mut out = Vec::new();
    let mut word = vec![0usize; 2 * n_prime];
    let mut hits = vec![0u8; n_prime + 1];
    fill(0, &floor, &mut word, &mut hits, &mut out);
    out
}

fn fill(slot: usize, floor: &[usize], word: &mut [usize], hits: &mut [u8], out: &mut Vec<PairingMap>) {
    if slot == word.len() {
        out.push(PairingMap { tau: word.to_vec() });
        return;
    }
    for v in floor[slot]..hits.len() {
        if hits[v] == 2 {
            continue;
        }
        hits[v] += 1;
        word[slot] = v;
        fill(slot + 1, floor, word, hits, out);
        hits[v] -= 1;
    }
}

/// All of `J_{n,n'}`: pairings of every index pair, pairs in lexicographic order.
pub fn enumerate_triples(n: usize, n_prime: usize) -> Result<Vec<IndexTriple>> {
    let pairs = enumerate_index_pairs(n, n_prime)?;
    let mut out = Vec::new();
    for pair in pairs {
        for tau in enumerate_pairings(&pair) {
            out.push(IndexTriple {
                pair: pair.clone(),
                tau,
            });
        }
    }
    Ok(out)
}

/// `|J_{n,n'}| = n!(n-1)! / (2^{n'} (n-n')! (n-n'-1)!)`, exactly.
///
/// Evaluated as a product of two falling factorials over `2^{n'}`; each factor
/// pair `(n-j)(n-1-j)` is even, so the division is exact.
pub fn triple_count_closed_form(n: usize, n_prime: usize) -> Result<u64> {
    check_orders(n, n_prime)?;
    let overflow = || Error::Overflow(format!("|J_({n},{n_prime})|"));
    let mut acc: u128 = 1;
    for j in 0..n_prime {
        let pair = ((n - j) as u128) * ((n - 1 - j) as u128);
        acc = acc.checked_mul(pair / 2).ok_or_else(overflow)?;
    }
    u64::try_from(acc).map_err(|_| overflow())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pair(n: usize, np: usize, a: &[u8], b: &[u8]) -> MomentIndexPair {
        MomentIndexPair::new(n, np, a.to_vec(), b.to_vec()).unwrap()
    }

    #[test]
    fn iota_examples() {
        assert_eq!(iota(&[1, 0, 1, 0]), vec![1, 3]);
        assert!(iota(&[0, 0]).is_empty());
        assert_eq!(iota(&[1, 1, 1]), vec![1, 2, 3]);
    }

    /// Exhaustive filter over every candidate bit pattern of length n + n'.
    fn brute_force_pairs(n: usize, np: usize) -> Vec<(Vec<u8>, Vec<u8>)> {
        let mut out = Vec::new();
        for code in 0..(1u64 << (n + np)) {
            let bits = bits_of(code, n + np);
            let (a, b) = bits.split_at(n);
            let last_ok = np == 0 || b[np - 1] == 0;
            if last_ok && weight(a) + weight(b) == 2 * np {
                out.push((a.to_vec(), b.to_vec()));
            }
        }
        out
    }

    #[test]
    fn index_pairs_match_brute_force() {
        for n in 1..=6 {
            for np in 0..n {
                let got: Vec<_> = enumerate_index_pairs(n, np)
                    .unwrap()
                    .into_iter()
                    .map(|p| (p.alpha, p.beta))
                    .collect();
                assert_eq!(got, brute_force_pairs(n, np), "n={n} n'={np}");
            }
        }
    }

    #[test]
    fn index_pair_examples() {
        let p = enumerate_index_pairs(1, 0).unwrap();
        assert_eq!(p, vec![pair(1, 0, &[0], &[])]);

        let p = enumerate_index_pairs(2, 1).unwrap();
        assert_eq!(p, vec![pair(2, 1, &[1, 1], &[0])]);

        let p = enumerate_index_pairs(3, 1).unwrap();
        assert_eq!(
            p,
            vec![
                pair(3, 1, &[0, 1, 1], &[0]),
                pair(3, 1, &[1, 0, 1], &[0]),
                pair(3, 1, &[1, 1, 0], &[0]),
            ]
        );
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(enumerate_index_pairs(2, 2).is_err());
        assert!(enumerate_index_pairs(0, 0).is_err());
        assert!(enumerate_triples(3, 5).is_err());
        assert!(triple_count_closed_form(3, 3).is_err());
        assert!(enumerate_index_pairs(MAX_ENUMERATION_ORDER + 1, 1).is_err());
    }

    #[test]
    fn pair_constructor_checks_invariants() {
        assert!(MomentIndexPair::new(2, 1, vec![1, 1], vec![1]).is_err());
        assert!(MomentIndexPair::new(2, 1, vec![1, 0], vec![0]).is_err());
        assert!(MomentIndexPair::new(2, 0, vec![1, 0], vec![]).is_err());
        assert!(MomentIndexPair::new(2, 1, vec![1, 2], vec![0]).is_err());
    }

    /// Every map {1..2n'} -> {1..n'} filtered by the two defining conditions,
    /// with condition (i) read literally as "at least two preimages".
    fn brute_force_pairings(p: &MomentIndexPair) -> Vec<Vec<usize>> {
        let np = p.n_prime;
        let slots = 2 * np;
        let a = p.alpha_weight();
        let bpos = iota(&p.beta);
        let mut out = Vec::new();
        let total = (np as u64).pow(slots as u32);
        for mut code in 0..total {
            let mut word = vec![0usize; slots];
            for k in (0..slots).rev() {
                word[k] = (code % np as u64) as usize + 1;
                code /= np as u64;
            }
            let at_least_two = (1..=np).all(|k| word.iter().filter(|&&v| v == k).count() >= 2);
            let ordered = (a..slots).all(|i| word[i] > bpos[i - a]);
            if at_least_two && ordered {
                out.push(word);
            }
        }
        out
    }

    #[test]
    fn pairings_match_brute_force() {
        for n in 2..=5 {
            for np in 1..n.min(5) {
                for p in enumerate_index_pairs(n, np).unwrap() {
                    let got: Vec<_> = enumerate_pairings(&p).into_iter().map(|t| t.tau).collect();
                    assert_eq!(got, brute_force_pairings(&p), "{p:?}");
                }
            }
        }
    }

    #[test]
    fn pairing_examples() {
        let p = pair(2, 1, &[1, 1], &[0]);
        assert_eq!(enumerate_pairings(&p), vec![PairingMap { tau: vec![1, 1] }]);

        let p = pair(3, 2, &[1, 1, 1], &[1, 0]);
        let taus: Vec<_> = enumerate_pairings(&p).into_iter().map(|t| t.tau).collect();
        assert_eq!(taus, vec![vec![1, 1, 2, 2], vec![1, 2, 1, 2], vec![2, 1, 1, 2]]);
        assert!(taus.iter().all(|t| t[3] == 2));

        let p = pair(4, 0, &[0, 0, 0, 0], &[]);
        assert_eq!(enumerate_pairings(&p), vec![PairingMap { tau: vec![] }]);
    }

    #[test]
    fn pairing_constructor_rejects_violations() {
        let p = pair(3, 2, &[1, 1, 1], &[1, 0]);
        assert!(PairingMap::new(&p, vec![1, 1, 2, 2]).is_ok());
        assert!(PairingMap::new(&p, vec![2, 2, 1, 1]).is_err());
        assert!(PairingMap::new(&p, vec![1, 1, 1, 2]).is_err());
        assert!(PairingMap::new(&p, vec![1, 2, 2]).is_err());
    }

    #[test]
    fn triple_count_examples() {
        assert_eq!(enumerate_triples(2, 1).unwrap().len(), 1);
        assert_eq!(enumerate_triples(3, 2).unwrap().len(), 3);
        assert_eq!(enumerate_triples(4, 3).unwrap().len(), 18);
        for n in 1..30 {
            assert_eq!(triple_count_closed_form(n, 0).unwrap(), 1);
        }
        assert_eq!(triple_count_closed_form(5, 4).unwrap(), 180);
        assert_eq!(triple_count_closed_form(7, 6).unwrap(), 56700);
    }

    #[test]
    fn closed_form_signals_overflow() {
        assert!(matches!(triple_count_closed_form(40, 39), Err(Error::Overflow(_))));
        assert!(triple_count_closed_form(12, 11).is_ok());
    }

    #[test]
    fn enumeration_matches_closed_form_and_invariants() {
        for n in 1..=6 {
            for np in 0..n {
                let triples = enumerate_triples(n, np).unwrap();
                assert_eq!(triples.len() as u64, triple_count_closed_form(n, np).unwrap());
                let unique: HashSet<_> = triples.iter().collect();
                assert_eq!(unique.len(), triples.len());
                for tr in &triples {
                    // Round-trip through the validating constructors.
                    let pm = PairingMap::new(tr.pair(), tr.tau_values().to_vec()).unwrap();
                    IndexTriple::new(tr.pair().clone(), pm).unwrap();
                }
                let mut sorted = triples.clone();
                sorted.sort();
                assert_eq!(sorted, triples, "not lexicographic for n={n} n'={np}");
                assert_eq!(enumerate_triples(n, np).unwrap(), triples);
            }
        }
    }

    #[test]
    fn serializes_triples_as_flat_arrays() {
        let tr = &enumerate_triples(2, 1).unwrap()[0];
        let json = serde_json::to_string(tr).unwrap();
        assert_eq!(json, r#"{"alpha":[1,1],"beta":[0],"tau":[1,1]}"#);
    }
}
