//! Linear threshold hash functions and packed binary codes.

use alloc::vec::Vec;
use core::f64::consts::FRAC_2_PI;

use crate::matrix::dot;
use crate::{Error, Matrix, Result};

/// `x -> sign(beta . x + bias)` with `sign(0) = +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFunction {
    beta: Vec<f64>,
    bias: f64,
}

impl HashFunction {
    pub fn new(beta: Vec<f64>, bias: f64) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if let Some(col) = beta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        if !bias.is_finite() {
            return Err(Error::NonFinite {
                row: 0,
                col: beta.len(),
            });
        }
        if beta.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain("hash function direction is all zeros"));
        }
        Ok(HashFunction { beta, bias })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// `beta . x + bias`, unchecked.
    #[inline]
    pub fn response(&self, x: &[f64]) -> f64 {
        dot(&self.beta, x) + self.bias
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Hard output in `{-1, +1}`.
    pub fn eval_sign(&self, x: &[f64]) -> Result<i8> {
        self.check(x)?;
        Ok(sign(self.response(x)))
    }

    /// `(2/pi) * atan(beta . x + bias)`, strictly inside `(-1, 1)`.
    pub fn eval_smooth(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(smooth(self.response(x)))
    }
}

#[inline]
pub fn sign(z: f64) -> i8 {
    if z >= 0.0 {
        1
    } else {
        -1
    }
}

#[inline]
pub fn smooth(z: f64) -> f64 {
    FRAC_2_PI * libm::atan(z)
}

/// Derivative of [`smooth`] with respect to its argument.
#[inline]
pub fn smooth_derivative(z: f64) -> f64 {
    FRAC_2_PI / (1.0 + z * z)
}

/// A packed code of `len` symbols in `{-1, +1}`; bit `s` lives in word
/// `s / 64` at position `s % 64`, set for `+1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BinaryCode {
    words: Vec<u64>,
    len: usize,
}

impl BinaryCode {
    pub fn zeros(len: usize) -> Self {
        BinaryCode {
            words: alloc::vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_signs(signs: &[i8]) -> Self {
        let mut c = Self::zeros(signs.len());
        for (s, &v) in signs.iter().enumerate() {
            c.set(s, v);
        }
        c
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut c = Self::zeros(bits.len());
        for (s, &b) in bits.iter().enumerate() {
            if b {
                c.words[s / 64] |= 1 << (s % 64);
            }
        }
        c
    }

    /// Builds from packed words; bits at or beyond `len` must be clear.
    pub fn from_words(words: Vec<u64>, len: usize) -> Result<Self> {
        if words.len() != len.div_ceil(64) {
            return Err(Error::SizeMismatch {
                what: "code words",
                expected: len.div_ceil(64),
                found: words.len(),
            });
        }
        if len % 64 != 0 {
            if let Some(last) = words.last() {
                if last >> (len % 64) != 0 {
                    return Err(Error::Domain("padding bits set beyond code length"));
                }
            }
        }
        Ok(BinaryCode { words, len })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, s: usize) -> bool {
        self.words[s / 64] >> (s % 64) & 1 == 1
    }

    /// Symbol at position `s` in `{-1, +1}`.
    #[inline]
    pub fn get(&self, s: usize) -> i8 {
        if self.bit(s) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set(&mut self, s: usize, v: i8) {
        let mask = 1u64 << (s % 64);
        if v > 0 {
            self.words[s / 64] |= mask;
        } else {
            self.words[s / 64] &= !mask;
        }
    }

    /// Byte `j` of the packed representation (bits `8j..8j+8`, LSB first).
    #[inline]
    pub fn byte(&self, j: usize) -> u8 {
        (self.words[j / 8] >> ((j % 8) * 8)) as u8
    }

    pub fn signs(&self) -> Vec<i8> {
        (0..self.len).map(|s| self.get(s)).collect()
    }

    /// Number of differing positions.
    pub fn hamming(&self, other: &BinaryCode) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Ordered set of hash functions; bit `s` of a code is function `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeBook {
    functions: Vec<HashFunction>,
    dim: usize,
}

impl CodeBook {
    pub fn new(dim: usize) -> Self {
        CodeBook {
            functions: Vec::new(),
            dim,
        }
    }

    pub fn from_functions(dim: usize, functions: Vec<HashFunction>) -> Result<Self> {
        let mut cb = CodeBook::new(dim);
        for h in functions {
            cb.push(h)?;
        }
        Ok(cb)
    }

    pub fn push(&mut self, h: HashFunction) -> Result<()> {
        if h.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: h.dim(),
            });
        }
        self.functions.push(h);
        Ok(())
    }

    pub fn functions(&self) -> &[HashFunction] {
        &self.functions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> usize {
        self.functions.len()
    }

    pub fn encode_one(&self, x: &[f64]) -> Result<BinaryCode> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut code = BinaryCode::zeros(self.bits());
        for (s, h) in self.functions.iter().enumerate() {
            code.set(s, sign(h.response(x)));
        }
        Ok(code)
    }

    /// Encodes every row of `xs`.
    pub fn encode(&self, xs: &Matrix) -> Result<Vec<BinaryCode>> {
        if xs.cols() != self.dim && xs.rows() > 0 {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: xs.cols(),
            });
        }
        xs.iter_rows().map(|r| self.encode_one(r)).collect()
    }
}
