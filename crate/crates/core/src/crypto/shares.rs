//! Multiplicative splitting of a small integer tag into group elements.

use rand::CryptoRng;

use super::group::{Element, Exponent, GroupId};
use crate::error::{Error, Result};

/// `n` elements whose product is `g^s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagShareSet {
    shares: Vec<Element>,
}

impl TagShareSet {
    pub fn shares(&self) -> &[Element] {
        &self.shares
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn into_shares(self) -> Vec<Element> {
        self.shares
    }
}

/// `A_i = g^{r_i}` for `i < n` and `A_n = g^{s - Σ r_i}`.
pub fn split_secret<R: CryptoRng + ?Sized>(
    group: GroupId,
    s: u64,
    n: usize,
    tag_bits: u32,
    rng: &mut R,
) -> Result<TagShareSet> {
    if n < 2 {
        return Err(Error::param(format!("need at least 2 shares, got {n}")));
    }
    if tag_bits < 64 && s >> tag_bits != 0 {
        return Err(Error::param(format!("tag {s} does not fit in {tag_bits} bits")));
    }
    let mut sum = group.exponent(0);
    let mut shares = Vec::with_capacity(n);
    for _ in 0..n - 1 {
        let r = group.random_exponent(rng);
        sum = sum.add(&r);
        shares.push(group.pow_gen(&r));
    }
    let last: Exponent = group.exponent(s).add(&sum.neg());
    shares.push(group.pow_gen(&last));
    Ok(TagShareSet { shares })
}

/// Product of all shares.
pub fn combine(group: GroupId, shares: &[Element]) -> Element {
    shares.iter().fold(group.identity(), |acc, a| acc.op(a))
}

/// Every share raised to `t`; the product becomes `(g^t)^s`.
pub fn raise(shares: &[Element], t: &Exponent) -> Vec<Element> {
    shares.iter().map(|a| a.pow(t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn products() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for g in [GroupId::Ristretto255, GroupId::Schnorr61] {
            for n in [2, 3, 32] {
                let zero = split_secret(g, 0, n, 32, &mut rng).unwrap();
                assert_eq!(zero.len(), n);
                assert_eq!(combine(g, zero.shares()), g.identity());
            }
            let seven = split_secret(g, 7, 3, 32, &mut rng).unwrap();
            assert_eq!(combine(g, seven.shares()), g.pow_gen(&g.exponent(7)));
            let t = g.random_nonzero_exponent(&mut rng);
            let raised = raise(seven.shares(), &t);
            assert_eq!(combine(g, &raised), g.generator().pow(&t).pow(&g.exponent(7)));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let g = GroupId::Schnorr61;
        assert!(split_secret(g, 1, 1, 32, &mut rng).is_err());
        assert!(split_secret(g, 1 << 20, 4, 20, &mut rng).is_err());
        assert!(split_secret(g, (1 << 20) - 1, 4, 20, &mut rng).is_ok());
    }

    #[test]
    fn individual_shares_look_unrelated_to_the_tag() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let g = GroupId::Schnorr61;
        let a = split_secret(g, 5, 4, 32, &mut rng).unwrap();
        let b = split_secret(g, 5, 4, 32, &mut rng).unwrap();
        for (x, y) in a.shares().iter().zip(b.shares()) {
            assert_ne!(x, y);
        }
    }
}
