//! Exact reference evaluator for mixed moments, shared by several test targets.
//!
//! Infinitesimal freeness of `(φ, φ′)` is ordinary freeness of the state
//! `φ + εφ′` with values in the dual numbers `ℚ[ε]/ε²`. So mixed moments
//! follow from the noncrossing moment-cumulant formula with all mixed
//! cumulants set to zero, computed here over exact dual rationals. This
//! shares no code path with the centering recursion of the library.

#![allow(dead_code)]

use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typeb_core::infinitesimal::{Element, Letter, Poly, PolyState, State};

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    BigRational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub re: Q,
    pub eps: Q,
}

impl Dual {
    fn new(re: Q, eps: Q) -> Self {
        Dual { re, eps }
    }

    fn zero() -> Self {
        Dual::new(Q::zero(), Q::zero())
    }

    fn one() -> Self {
        Dual::new(Q::one(), Q::zero())
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re.clone() * o.re.clone(), self.re * o.eps + self.eps * o.re)
    }
}

/// Noncrossing partitions of `{0, …, n−1}` as lists of blocks.
pub fn nc_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(i: usize, max: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        let n = labels.len();
        if i == n {
            let blocks = max;
            let mut parts = vec![Vec::new(); blocks];
            for (k, &l) in labels.iter().enumerate() {
                parts[l].push(k);
            }
            if !crossing(labels) {
                out.push(parts);
            }
            return;
        }
        for l in 0..=max {
            labels[i] = l;
            rec(i + 1, max.max(l + 1), labels, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    rec(0, 0, &mut labels, &mut out);
    out
}

fn crossing(labels: &[usize]) -> bool {
    let n = labels.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    if labels[a] == labels[c] && labels[b] == labels[d] && labels[a] != labels[b] {
                        return true;
                    }
                }
            }
        }
    }
    false
}

pub type QLetter = Letter<Poly<Q>, Poly<Q>>;

pub struct Oracle<'a> {
    pub sa: &'a PolyState<Q>,
    pub sb: &'a PolyState<Q>,
}

impl Oracle<'_> {
    fn moment(&self, letters: &[&QLetter]) -> Dual {
        let is_a = matches!(letters[0], Letter::A(_));
        let mut p = Poly::constant(Q::one());
        for l in letters {
            let (Letter::A(x) | Letter::E(x)) = l;
            p = p.mul(x);
        }
        let (m, dm) = if is_a {
            (self.sa.phi(&p).unwrap(), self.sa.phi_prime(&p).unwrap())
        } else {
            (self.sb.phi(&p).unwrap(), self.sb.phi_prime(&p).unwrap())
        };
        Dual::new(m, dm)
    }

    /// Free cumulant of the letters at `idx`, all from one algebra.
    fn cumulant(&self, word: &[QLetter], idx: &[usize], memo: &mut HashMap<Vec<usize>, Dual>) -> Dual {
        if let Some(v) = memo.get(idx) {
            return v.clone();
        }
        let letters: Vec<&QLetter> = idx.iter().map(|&i| &word[i]).collect();
        let mut k = self.moment(&letters);
        for pi in nc_partitions(idx.len()) {
            if pi.len() == 1 {
                continue;
            }
            let mut prod = Dual::one();
            for block in &pi {
                let sub: Vec<usize> = block.iter().map(|&b| idx[b]).collect();
                prod = prod * self.cumulant(word, &sub, memo);
            }
            k = k - prod;
        }
        memo.insert(idx.to_vec(), k.clone());
        k
    }

    /// `(φ, φ′)` of the word with all mixed cumulants zero.
    pub fn eval(&self, word: &[QLetter]) -> (Q, Q) {
        if word.is_empty() {
            return (Q::one(), Q::zero());
        }
        let mut memo = HashMap::new();
        let mut total = Dual::zero();
        for pi in nc_partitions(word.len()) {
            let mut prod = Dual::one();
            for block in &pi {
                let first = matches!(word[block[0]], Letter::A(_));
                if block.iter().any(|&i| matches!(word[i], Letter::A(_)) != first) {
                    prod = Dual::zero();
                    break;
                }
                prod = prod * self.cumulant(word, block, &mut memo);
            }
            total = total + prod;
        }
        (total.re, total.eps)
    }
}

pub fn random_state(rng: &mut ChaCha8Rng, degree: usize) -> PolyState<Q> {
    let m = (0..=degree).map(|_| q(rng.random_range(-3..=3))).collect();
    let dm = (0..=degree).map(|_| q(rng.random_range(-3..=3))).collect();
    PolyState::new(m, dm).unwrap()
}

pub fn random_word(rng: &mut ChaCha8Rng, len: usize) -> Vec<QLetter> {
    (0..len)
        .map(|_| {
            let deg = rng.random_range(0..=2);
            let p = Poly::new((0..=deg).map(|_| q(rng.random_range(-2..=2))).collect());
            if rng.random_bool(0.5) {
                Letter::A(p)
            } else {
                Letter::E(p)
            }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
