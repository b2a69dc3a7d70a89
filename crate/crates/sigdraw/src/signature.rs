//! Truncated path signatures over a `d`-letter alphabet.
//!
//! A signature is stored densely: levels `1..=level` concatenated, words
//! within a level ordered lexicographically (letters are 1-based, so for the
//! time-augmented paths used here letter 1 is time and letter 2 is value).
//! The constant level-0 coefficient is always 1 and is not stored.
//!
//! Two structural facts the rest of the crate leans on:
//! * the product of two truncated signatures only ever combines levels
//!   `i + j = m`, so truncating at a lower level is exactly a prefix of the
//!   dense coefficient vector;
//! * a path's signature is the product of its segments' signatures, and a
//!   straight segment's signature is the tensor exponential of its
//!   increment.

use crate::error::{Error, Result};
use crate::float::Float;
use crate::paths::AugmentedPath;

/// Number of coefficients in a signature truncated at `level`:
/// `d + d^2 + ... + d^level` (the level-0 constant is excluded).
pub fn num_terms(d: usize, level: usize) -> usize {
    let mut total = 0;
    let mut pow = 1;
    for _ in 0..level {
        pow *= d;
        total += pow;
    }
    total
}

/// Dense truncated signature. `coeffs[off(m) + w]` is the coefficient of
/// the `w`-th word (base-`d` order) of level `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature<T> {
    d: usize,
    level: usize,
    coeffs: Vec<T>,
}

impl<T: Float> Signature<T> {
    /// The identity element: all stored coefficients zero (level-0 is 1).
    pub fn unit(d: usize, level: usize) -> Self {
        assert!(d >= 1 && level >= 1, "signature needs d >= 1 and level >= 1");
        Signature { d, level, coeffs: vec![T::zero(); num_terms(d, level)] }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Flattened coefficients of levels `1..=level`; exactly the feature
    /// vector used for regression (the constant term is the intercept's
    /// job).
    pub fn features(&self) -> &[T] {
        &self.coeffs
    }

    /// Coefficient of a word given as 1-based letters, e.g. `&[1, 2]`.
    pub fn coeff(&self, word: &[usize]) -> Result<T> {
        if word.is_empty() || word.len() > self.level {
            return Err(Error::invalid(format!(
                "word length {} outside 1..={}",
                word.len(),
                self.level
            )));
        }
        let mut idx = 0;
        for &letter in word {
            if letter < 1 || letter > self.d {
                return Err(Error::invalid(format!(
                    "letter {letter} outside 1..={}",
                    self.d
                )));
            }
            idx = idx * self.d + (letter - 1);
        }
        Ok(self.coeffs[num_terms(self.d, word.len() - 1) + idx])
    }

    /// Restriction to a lower truncation level; a prefix copy of the
    /// coefficients.
    pub fn truncated(&self, level: usize) -> Result<Signature<T>> {
        if level < 1 || level > self.level {
            return Err(Error::invalid(format!(
                "truncation level {level} outside 1..={}",
                self.level
            )));
        }
        Ok(Signature {
            d: self.d,
            level,
            coeffs: self.coeffs[..num_terms(self.d, level)].to_vec(),
        })
    }
}

/// Flattened coefficients of a signature (see [`Signature::features`]).
pub fn features<T: Float>(sig: &Signature<T>) -> &[T] {
    sig.features()
}

/// Signature of a straight segment with the given increment: level `m` is
/// `increment^{tensor m} / m!`.
pub fn segment_signature<T: Float>(increment: &[T], level: usize) -> Signature<T> {
    let d = increment.len();
    let mut sig = Signature::unit(d, level);
    let mut prev: Vec<T> = increment.to_vec();
    sig.coeffs[..d].copy_from_slice(&prev);
    let mut offset = d;
    for m in 2..=level {
        let inv_m = T::one() / T::cast(m);
        let mut next = vec![T::zero(); prev.len() * d];
        for (a, &pa) in prev.iter().enumerate() {
            for (b, &db) in increment.iter().enumerate() {
                next[a * d + b] = pa * db * inv_m;
            }
        }
        sig.coeffs[offset..offset + next.len()].copy_from_slice(&next);
        offset += next.len();
        prev = next;
    }
    sig
}

/// Derivative of [`segment_signature`] with respect to one coordinate of
/// the increment. Not group-like: its implicit level-0 coefficient is 0.
fn segment_tangent<T: Float>(increment: &[T], level: usize, coord: usize) -> Signature<T> {
    let d = increment.len();
    let mut tan = Signature::unit(d, level);
    // level 1 of the exponential is the increment itself
    let mut e_prev: Vec<T> = increment.to_vec();
    let mut t_prev = vec![T::zero(); d];
    t_prev[coord] = T::one();
    tan.coeffs[..d].copy_from_slice(&t_prev);
    let mut offset = d;
    for m in 2..=level {
        let inv_m = T::one() / T::cast(m);
        let mut e_next = vec![T::zero(); e_prev.len() * d];
        let mut t_next = vec![T::zero(); t_prev.len() * d];
        for a in 0..e_prev.len() {
            for b in 0..d {
                let db = increment[b];
                e_next[a * d + b] = e_prev[a] * db * inv_m;
                let mut t = t_prev[a] * db;
                if b == coord {
                    t = t + e_prev[a];
                }
                t_next[a * d + b] = t * inv_m;
            }
        }
        tan.coeffs[offset..offset + t_next.len()].copy_from_slice(&t_next);
        offset += t_next.len();
        e_prev = e_next;
        t_prev = t_next;
    }
    tan
}

/// Truncated tensor-algebra product with explicit level-0 coefficients, so
/// that tangents (level-0 = 0) can be multiplied by group-like elements
/// (level-0 = 1).
fn mul_with_units<T: Float>(
    a: &Signature<T>,
    a0: T,
    b: &Signature<T>,
    b0: T,
) -> Signature<T> {
    debug_assert_eq!(a.d, b.d);
    debug_assert_eq!(a.level, b.level);
    let d = a.d;
    let level = a.level;
    let mut c = Signature::unit(d, level);
    // level-0 cross terms: a0 * b_m + b0 * a_m
    for (cm, (&am, &bm)) in c.coeffs.iter_mut().zip(a.coeffs.iter().zip(&b.coeffs)) {
        *cm = a0 * bm + b0 * am;
    }
    // proper cross terms a_i (x) b_j with i + j = m
    let mut pow = vec![1usize; level + 1];
    for j in 1..=level {
        pow[j] = pow[j - 1] * d;
    }
    let off = |m: usize| num_terms(d, m - 1);
    for m in 2..=level {
        let out = off(m);
        for i in 1..m {
            let j = m - i;
            let (oi, oj) = (off(i), off(j));
            for p in 0..pow[i] {
                let ap = a.coeffs[oi + p];
                if ap == T::zero() {
                    continue;
                }
                let row = out + p * pow[j];
                for s in 0..pow[j] {
                    c.coeffs[row + s] = c.coeffs[row + s] + ap * b.coeffs[oj + s];
                }
            }
        }
    }
    c
}

/// Chen product of two truncated signatures: the signature of the
/// concatenated path. Level `m` of the result combines levels `i + j = m`
/// of the operands only.
pub fn chen_product<T: Float>(a: &Signature<T>, b: &Signature<T>) -> Result<Signature<T>> {
    if a.d != b.d {
        return Err(Error::invalid(format!("alphabet mismatch: {} vs {}", a.d, b.d)));
    }
    if a.level != b.level {
        return Err(Error::invalid(format!(
            "truncation level mismatch: {} vs {}",
            a.level, b.level
        )));
    }
    Ok(mul_with_units(a, T::one(), b, T::one()))
}

fn segments<T: Float>(path: &AugmentedPath<T>) -> Result<Vec<[T; 2]>> {
    if path.len() < 2 {
        return Err(Error::invalid(format!(
            "signature needs at least 2 points, got {}",
            path.len()
        )));
    }
    let mut segs = Vec::with_capacity(path.len() - 1);
    for w in path.points.windows(2) {
        let (t0, x0) = w[0];
        let (t1, x1) = w[1];
        if !(t1 > t0) {
            return Err(Error::invalid(format!(
                "time coordinate must be strictly increasing ({t0} then {t1})"
            )));
        }
        segs.push([t1 - t0, x1 - x0]);
    }
    Ok(segs)
}

/// Signature of a piecewise-linear time-augmented path: the left-to-right
/// Chen product of its segments' signatures.
pub fn path_signature<T: Float>(path: &AugmentedPath<T>, level: usize) -> Result<Signature<T>> {
    if level < 1 {
        return Err(Error::invalid("truncation level must be >= 1"));
    }
    let segs = segments(path)?;
    let mut sig = Signature::unit(2, level);
    for seg in &segs {
        let e = segment_signature(&seg[..], level);
        sig = mul_with_units(&sig, T::one(), &e, T::one());
    }
    Ok(sig)
}

/// Exact Jacobian of every signature coefficient with respect to the path's
/// value coordinates (time coordinates held fixed). Row `f`, column `j`
/// holds the derivative of feature `f` with respect to `x_j`.
///
/// Computed from cached prefix products and a reverse pass of suffix
/// products: value `x_j` enters only the two adjacent segments, so its
/// column is `P_{j-1} dE_{j-1} Q_j - P_j dE_j Q_{j+1}` with the signs from
/// the segment increments.
pub fn signature_jacobian<T: Float>(
    path: &AugmentedPath<T>,
    level: usize,
) -> Result<Vec<Vec<T>>> {
    if level < 1 {
        return Err(Error::invalid("truncation level must be >= 1"));
    }
    let segs = segments(path)?;
    let n = path.len();
    let es: Vec<Signature<T>> =
        segs.iter().map(|seg| segment_signature(&seg[..], level)).collect();

    let mut prefix: Vec<Signature<T>> = Vec::with_capacity(n);
    prefix.push(Signature::unit(2, level));
    for e in &es {
        let next = mul_with_units(prefix.last().unwrap(), T::one(), e, T::one());
        prefix.push(next);
    }
    let mut suffix: Vec<Signature<T>> = vec![Signature::unit(2, level); n];
    for k in (0..n - 1).rev() {
        suffix[k] = mul_with_units(&es[k], T::one(), &suffix[k + 1], T::one());
    }

    let f = num_terms(2, level);
    let mut jac = vec![vec![T::zero(); n]; f];
    const VALUE: usize = 1; // coordinate index of the value letter
    for j in 0..n {
        let mut col = vec![T::zero(); f];
        if j >= 1 {
            let tan = segment_tangent(&segs[j - 1][..], level, VALUE);
            let left = mul_with_units(&prefix[j - 1], T::one(), &tan, T::zero());
            let full = mul_with_units(&left, T::zero(), &suffix[j], T::one());
            for (c, &v) in col.iter_mut().zip(&full.coeffs) {
                *c = *c + v;
            }
        }
        if j + 1 < n {
            let tan = segment_tangent(&segs[j][..], level, VALUE);
            let left = mul_with_units(&prefix[j], T::one(), &tan, T::zero());
            let full = mul_with_units(&left, T::zero(), &suffix[j + 1], T::one());
            for (c, &v) in col.iter_mut().zip(&full.coeffs) {
                *c = *c - v;
            }
        }
        for (row, &v) in jac.iter_mut().zip(&col) {
            row[j] = v;
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{time_augment, SeriesPath};
    use approx::assert_abs_diff_eq;

    #[test]
    fn term_counts() {
        assert_eq!(num_terms(2, 10), 2046);
        assert_eq!(num_terms(2, 1), 2);
        assert_eq!(num_terms(1, 5), 5);
        assert_eq!(num_terms(3, 2), 12);
        assert_eq!(num_terms(2, 0), 0);
    }

    #[test]
    fn one_dimensional_segment_is_the_scalar_exponential() {
        let sig = segment_signature(&[2.0_f64], 3);
        assert_abs_diff_eq!(sig.features()[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sig.features()[1], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sig.features()[2], 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn two_dimensional_segment_level_two() {
        let (a, b) = (0.5_f64, -2.0);
        let sig = segment_signature(&[a, b], 2);
        assert_abs_diff_eq!(sig.coeff(&[1]).unwrap(), a);
        assert_abs_diff_eq!(sig.coeff(&[2]).unwrap(), b);
        assert_abs_diff_eq!(sig.coeff(&[1, 1]).unwrap(), a * a / 2.0);
        assert_abs_diff_eq!(sig.coeff(&[1, 2]).unwrap(), a * b / 2.0);
        assert_abs_diff_eq!(sig.coeff(&[2, 1]).unwrap(), b * a / 2.0);
        assert_abs_diff_eq!(sig.coeff(&[2, 2]).unwrap(), b * b / 2.0);
    }

    #[test]
    fn unit_is_the_identity() {
        let e = segment_signature(&[0.3_f64, 0.7], 4);
        let u = Signature::unit(2, 4);
        assert_eq!(chen_product(&u, &e).unwrap(), e);
        assert_eq!(chen_product(&e, &u).unwrap(), e);
    }

    #[test]
    fn product_cross_terms_by_hand() {
        let a = segment_signature(&[1.0_f64, 2.0], 2);
        let b = segment_signature(&[-0.5_f64, 0.25], 2);
        let c = chen_product(&a, &b).unwrap();
        let hand = a.coeff(&[1, 2]).unwrap()
            + b.coeff(&[1, 2]).unwrap()
            + a.coeff(&[1]).unwrap() * b.coeff(&[2]).unwrap();
        assert_abs_diff_eq!(c.coeff(&[1, 2]).unwrap(), hand, epsilon = 1e-15);
        assert_abs_diff_eq!(
            c.coeff(&[1]).unwrap(),
            a.coeff(&[1]).unwrap() + b.coeff(&[1]).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn product_is_associative() {
        let a = segment_signature(&[0.4_f64, -0.3], 5);
        let b = segment_signature(&[-0.2_f64, 0.9], 5);
        let c = segment_signature(&[0.7_f64, 0.1], 5);
        let left = chen_product(&chen_product(&a, &b).unwrap(), &c).unwrap();
        let right = chen_product(&a, &chen_product(&b, &c).unwrap()).unwrap();
        for (l, r) in left.features().iter().zip(right.features()) {
            assert_abs_diff_eq!(l, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn mismatched_operands_are_rejected() {
        let a = segment_signature(&[1.0_f64], 3);
        let b = segment_signature(&[1.0_f64, 2.0], 3);
        assert!(chen_product(&a, &b).is_err());
        let c = segment_signature(&[1.0_f64, 2.0], 2);
        assert!(chen_product(&b, &c).is_err());
    }

    #[test]
    fn straight_path_matches_its_single_segment() {
        let p = AugmentedPath { points: vec![(0.0_f64, 1.0), (1.0, 2.5)] };
        let sig = path_signature(&p, 4).unwrap();
        let seg = segment_signature(&[1.0_f64, 1.5], 4);
        assert_eq!(sig, seg);
    }

    #[test]
    fn level_one_is_the_total_increment() {
        let p = time_augment(&SeriesPath::new(vec![1.0_f64, 0.4, 1.9, 1.1], 1.0).unwrap());
        let sig = path_signature(&p, 3).unwrap();
        assert_abs_diff_eq!(sig.coeff(&[1]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sig.coeff(&[2]).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn truncation_is_a_prefix() {
        let p = time_augment(&SeriesPath::new(vec![1.0_f64, 1.3, 0.8, 1.6, 1.2], 1.0).unwrap());
        let high = path_signature(&p, 6).unwrap();
        let low = path_signature(&p, 3).unwrap();
        assert_eq!(high.truncated(3).unwrap(), low);
        assert!(high.truncated(0).is_err());
        assert!(high.truncated(7).is_err());
    }

    #[test]
    fn scalar_exponential_by_segment_folding() {
        // a 1-d linear path split into several collinear pieces still has
        // the exponential series x^n / n! as its signature
        let x = 1.5_f64;
        let pieces = [0.2, 0.5, 0.1, 0.2];
        let mut sig = Signature::unit(1, 6);
        for frac in pieces {
            sig = chen_product(&sig, &segment_signature(&[x * frac], 6)).unwrap();
        }
        let mut factorial = 1.0;
        for m in 1..=6 {
            factorial *= m as f64;
            assert_abs_diff_eq!(sig.features()[m - 1], x.powi(m as i32) / factorial, epsilon = 1e-13);
        }
    }

    #[test]
    fn jacobian_level_one_rows_by_hand() {
        let p = time_augment(&SeriesPath::new(vec![1.0_f64, 1.4, 0.9], 1.0).unwrap());
        let jac = signature_jacobian(&p, 2).unwrap();
        // row 0: the time word, independent of values
        for &v in &jac[0] {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }
        // row 1: total value increment x_last - x_first
        assert_abs_diff_eq!(jac[1][0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(jac[1][1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(jac[1][2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_paths_are_rejected() {
        let p = AugmentedPath { points: vec![(0.0_f64, 1.0)] };
        assert!(path_signature(&p, 2).is_err());
        let bad = AugmentedPath { points: vec![(0.0_f64, 1.0), (0.0, 2.0)] };
        assert!(path_signature(&bad, 2).is_err());
    }
}
