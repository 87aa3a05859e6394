//! Discrete logarithms in a small range by baby-step giant-step.

use std::collections::HashMap;

use super::group::{Element, GroupId};

fn key(e: &Element) -> u64 {
    match e {
        Element::S(x) => *x,
        Element::R(_) => {
            let bytes = e.encode();
            u64::from_be_bytes(bytes[..8].try_into().unwrap())
        }
    }
}

/// Baby steps `base^j` for `j < M`, reusable across targets.
#[derive(Debug)]
pub struct BsgsTable {
    base: Element,
    bound: u64,
    step: u64,
    baby: HashMap<u64, u32>,
    giant: Element,
}

impl BsgsTable {
    /// Table for logarithms in `[0, bound)`, `M = ⌈√bound⌉` entries.
    pub fn new(base: &Element, bound: u64) -> Self {
        assert!(bound >= 1, "bound must be at least 1");
        let step = (bound as f64).sqrt().ceil().max(1.0) as u64;
        let step = if step.saturating_mul(step) < bound { step + 1 } else { step };
        let group: GroupId = base.group();
        let mut baby = HashMap::with_capacity(step as usize);
        let mut cur = group.identity();
        for j in 0..step {
            baby.entry(key(&cur)).or_insert(j as u32);
            cur = cur.op(base);
        }
        // cur = base^M
        Self {
            base: *base,
            bound,
            step,
            baby,
            giant: cur.inverse(),
        }
    }

    pub fn base(&self) -> &Element {
        &self.base
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    /// `s ∈ [0, bound)` with `base^s = target`, if any.
    pub fn solve(&self, target: &Element) -> Option<u64> {
        let mut gamma = *target;
        let giants = self.bound.div_ceil(self.step);
        for i in 0..giants {
            if let Some(&j) = self.baby.get(&key(&gamma)) {
                let s = i * self.step + j as u64;
                if s < self.bound && self.base.pow(&self.base.group().exponent(s)) == *target {
                    return Some(s);
                }
                if let Some(s) = self.linear_fallback(&gamma, i) {
                    return Some(s);
                }
            }
            gamma = gamma.op(&self.giant);
        }
        None
    }

    // Resolves a truncated-key collision inside one baby-step window.
    #[cold]
    fn linear_fallback(&self, gamma: &Element, i: u64) -> Option<u64> {
        let mut cur = self.base.group().identity();
        for j in 0..self.step {
            if cur == *gamma {
                let s = i * self.step + j;
                return (s < self.bound).then_some(s);
            }
            cur = cur.op(&self.base);
        }
        None
    }
}

/// `s ∈ [0, bound)` with `base^s = target`, or `None`.
pub fn discrete_log_small(base: &Element, target: &Element, bound: u64) -> Option<u64> {
    BsgsTable::new(base, bound).solve(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn identity_and_constructed_instance() {
        for g in [GroupId::Ristretto255, GroupId::Schnorr61] {
            let base = g.generator();
            assert_eq!(discrete_log_small(&base, &g.identity(), 1 << 20), Some(0));
            let target = base.pow(&g.exponent(42));
            assert_eq!(discrete_log_small(&base, &target, 1 << 20), Some(42));
        }
    }

    #[test]
    fn matches_linear_scan_exhaustively() {
        let g = GroupId::Schnorr61;
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let base = g.random_element(&mut rng);
        let table = BsgsTable::new(&base, 1 << 10);
        let mut cur = g.identity();
        for s in 0..1u64 << 10 {
            assert_eq!(table.solve(&cur), Some(s));
            cur = cur.op(&base);
        }
        // base^1024 is just outside the range
        assert_eq!(table.solve(&cur), None);
    }

    #[test]
    fn edges_of_the_range() {
        let g = GroupId::Ristretto255;
        let base = g.generator().pow(&g.exponent(987_654_321));
        for bound in [1u64, 2, 3, 17, 1000] {
            let table = BsgsTable::new(&base, bound);
            assert_eq!(table.solve(&base.pow(&g.exponent(bound - 1))), Some(bound - 1));
            assert_eq!(table.solve(&base.pow(&g.exponent(bound))), None);
        }
    }
}
