//! Subshifts generated by primitive substitutions, acting by the shift
//! `(g.x)_i = x_{i-g}`.
//!
//! Clopen sets are unions of cylinders over a window `[lo, lo+len)`.
//! Admissible words come from the two-letter language and iterated images;
//! word frequencies are enclosed by counting occurrences inside the blocks
//! `sigma^n(b)`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, RwLock};

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::group::FiniteSubset;
use crate::rational::{Interval, Rational};

const DEPTH_LIMIT: u32 = 64;
const PERIOD_SCAN_LIMIT: usize = 1 << 13;
const LENGTH_LIMIT: u128 = 1 << 100;

pub type Word = Box<[u8]>;

pub struct Substitution {
    alphabet: Vec<char>,
    images: Vec<Vec<u8>>,
    primitive: bool,
    two_letter: Vec<[u8; 2]>,
    languages: RwLock<HashMap<usize, Arc<Vec<Word>>>>,
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Substitution({})", self.rule())
    }
}

impl PartialEq for Substitution {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet && self.images == other.images
    }
}

impl Substitution {
    /// Parses rules written as `"a->ab; b->a"`.
    pub fn parse(rule: &str) -> Result<Self> {
        let mut alphabet: Vec<char> = Vec::new();
        let mut raw: Vec<(char, String)> = Vec::new();
        for part in rule.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (lhs, rhs) = part
                .split_once("->")
                .ok_or_else(|| Error::Parse(format!("rule {part:?} lacks '->'")))?;
            let mut lhs_chars = lhs.trim().chars();
            let letter = match (lhs_chars.next(), lhs_chars.next()) {
                (Some(c), None) => c,
                _ => return Err(Error::Parse(format!("left side {lhs:?} must be one letter"))),
            };
            if alphabet.contains(&letter) {
                return Err(Error::Parse(format!("letter {letter:?} defined twice")));
            }
            alphabet.push(letter);
            raw.push((letter, rhs.trim().to_string()));
        }
        if alphabet.is_empty() {
            return Err(Error::Parse("empty substitution".into()));
        }
        let mut images = Vec::with_capacity(raw.len());
        for (letter, rhs) in &raw {
            let mut image = Vec::new();
            for c in rhs.chars().filter(|c| !c.is_whitespace()) {
                let idx = alphabet.iter().position(|a| *a == c).ok_or_else(|| {
                    Error::Parse(format!("image of {letter:?} uses undefined letter {c:?}"))
                })?;
                image.push(idx as u8);
            }
            images.push(image);
        }
        Self::new(alphabet, images)
    }

    pub fn fibonacci() -> Self {
        Self::parse("a->ab; b->a").expect("valid rule")
    }

    pub fn new(alphabet: Vec<char>, images: Vec<Vec<u8>>) -> Result<Self> {
        if alphabet.len() != images.len() || alphabet.len() > u8::MAX as usize {
            return Err(Error::InvalidSystem("alphabet and images disagree".into()));
        }
        if images.iter().any(Vec::is_empty) {
            return Err(Error::InvalidSystem("erasing substitution".into()));
        }
        let mut sub = Substitution {
            alphabet,
            images,
            primitive: false,
            two_letter: Vec::new(),
            languages: RwLock::new(HashMap::new()),
        };
        sub.primitive = sub.compute_primitive();
        sub.two_letter = sub.compute_two_letter();
        Ok(sub)
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn is_primitive(&self) -> bool {
        self.primitive
    }

    pub fn rule(&self) -> String {
        self.alphabet
            .iter()
            .zip(&self.images)
            .map(|(c, img)| format!("{c}->{}", self.render(img)))
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn render(&self, w: &[u8]) -> String {
        w.iter().map(|&i| self.alphabet[i as usize]).collect()
    }

    pub fn parse_word(&self, s: &str) -> Result<Vec<u8>> {
        s.chars()
            .map(|c| {
                self.alphabet
                    .iter()
                    .position(|a| *a == c)
                    .map(|i| i as u8)
                    .ok_or_else(|| Error::Parse(format!("letter {c:?} not in alphabet")))
            })
            .collect()
    }

    /// Incidence matrix: entry `[a][b]` counts occurrences of `a` in `sigma(b)`.
    pub fn matrix(&self) -> Vec<Vec<u64>> {
        let k = self.alphabet.len();
        let mut m = vec![vec![0u64; k]; k];
        for (b, img) in self.images.iter().enumerate() {
            for &a in img {
                m[a as usize][b] += 1;
            }
        }
        m
    }

    fn compute_primitive(&self) -> bool {
        let k = self.alphabet.len();
        let base: Vec<Vec<bool>> = self
            .matrix()
            .iter()
            .map(|row| row.iter().map(|&v| v > 0).collect())
            .collect();
        let mut power = base.clone();
        // Wielandt: a primitive k x k matrix has a positive power by (k-1)^2 + 1.
        for _ in 0..((k - 1) * (k - 1) + 1) {
            if power.iter().all(|row| row.iter().all(|&v| v)) {
                return true;
            }
            let mut next = vec![vec![false; k]; k];
            for i in 0..k {
                for j in 0..k {
                    next[i][j] = (0..k).any(|l| power[i][l] && base[l][j]);
                }
            }
            power = next;
        }
        power.iter().all(|row| row.iter().all(|&v| v))
    }

    fn apply(&self, w: &[u8]) -> Vec<u8> {
        w.iter()
            .flat_map(|&c| self.images[c as usize].iter().copied())
            .collect()
    }

    fn compute_two_letter(&self) -> Vec<[u8; 2]> {
        let mut set: BTreeSet<[u8; 2]> = BTreeSet::new();
        for img in &self.images {
            for p in img.windows(2) {
                set.insert([p[0], p[1]]);
            }
        }
        loop {
            let mut grown = set.clone();
            for pair in &set {
                for p in self.apply(pair).windows(2) {
                    grown.insert([p[0], p[1]]);
                }
            }
            if grown.len() == set.len() {
                break;
            }
            set = grown;
        }
        set.into_iter().collect()
    }

    /// Depth `n` with every `|sigma^n(c)| >= len`.
    fn depth_for(&self, len: usize) -> Result<u32> {
        let mut lens: Vec<u128> = vec![1; self.alphabet.len()];
        for n in 0..=DEPTH_LIMIT {
            if lens.iter().all(|&l| l >= len as u128) {
                return Ok(n);
            }
            lens = self
                .images
                .iter()
                .map(|img| img.iter().map(|&c| lens[c as usize]).sum())
                .collect();
        }
        Err(Error::InvalidSystem(
            "substitution is not growing on every letter".into(),
        ))
    }

    /// Admissible words of length `len`, sorted lexicographically.
    pub fn language(&self, len: usize) -> Result<Arc<Vec<Word>>> {
        if let Some(words) = self.languages.read().expect("language cache").get(&len) {
            return Ok(words.clone());
        }
        let words = Arc::new(self.compute_language(len)?);
        self.languages
            .write()
            .expect("language cache")
            .insert(len, words.clone());
        Ok(words)
    }

    fn compute_language(&self, len: usize) -> Result<Vec<Word>> {
        let mut set: BTreeSet<Word> = BTreeSet::new();
        if len == 0 {
            set.insert(Box::from([]));
            return Ok(set.into_iter().collect());
        }
        if len == 1 {
            let mut letters: BTreeSet<u8> = BTreeSet::new();
            for pair in &self.two_letter {
                letters.extend(pair.iter().copied());
            }
            if letters.is_empty() {
                letters.extend(0..self.alphabet.len() as u8);
            }
            return Ok(letters.into_iter().map(|c| Box::from([c])).collect());
        }
        let depth = self.depth_for(len - 1)?;
        for pair in &self.two_letter {
            let mut w = pair.to_vec();
            for _ in 0..depth {
                w = self.apply(&w);
            }
            for f in w.windows(len) {
                set.insert(Box::from(f));
            }
        }
        Ok(set.into_iter().collect())
    }

    /// Smallest `k` such that translating by any non-zero `g` in `f` moves every
    /// cylinder over `[-k, k]`.
    pub fn freeness_level(&self, f: &FiniteSubset) -> Result<u32> {
        if !self.primitive {
            return Err(Error::NotFree("non-primitive substitution".into()));
        }
        let mut level = 0u32;
        let periods: BTreeSet<usize> = f
            .iter()
            .filter(|g| !g.is_zero())
            .map(|g| g.0[0].unsigned_abs() as usize)
            .collect();
        for p in periods {
            let l = self.periodic_bound(p)?;
            // Need 2k + 1 + p >= l.
            let k = l.saturating_sub(p + 1).div_ceil(2);
            level = level.max(k as u32);
        }
        Ok(level)
    }

    /// Smallest length `l` such that no admissible word of length `l` has period `p`.
    fn periodic_bound(&self, p: usize) -> Result<usize> {
        let mut l = p + 1;
        while l <= PERIOD_SCAN_LIMIT {
            let words = self.language(l)?;
            if !words.iter().any(|w| (0..l - p).all(|i| w[i] == w[i + p])) {
                return Ok(l);
            }
            l += 1.max(l / 8);
        }
        Err(Error::NotFree(format!(
            "admissible words with period {p} exist up to length {PERIOD_SCAN_LIMIT}"
        )))
    }

    /// Encloses the frequency of the union of the cylinders `words` (all of
    /// length `len`) within `tol`.
    pub fn frequency(&self, words: &BTreeSet<Word>, len: usize, tol: &Rational) -> Result<Interval> {
        if !self.primitive {
            return Err(Error::InvalidSystem(
                "non-primitive substitution: unique ergodicity not certified".into(),
            ));
        }
        if words.is_empty() {
            return Ok(Interval::point(Rational::from_integer(0.into())));
        }
        if len == 0 {
            return Ok(Interval::point(Rational::from_integer(1.into())));
        }
        let lookup: HashSet<&[u8]> = words.iter().map(|w| &w[..]).collect();
        let k = self.alphabet.len();
        let pad = len - 1;

        let depth0 = self.depth_for(len)?;
        let mut lens = vec![0u128; k];
        let mut occ = vec![0u128; k];
        let mut prefix: Vec<Vec<u8>> = vec![Vec::new(); k];
        let mut suffix: Vec<Vec<u8>> = vec![Vec::new(); k];
        for c in 0..k {
            let mut w = vec![c as u8];
            for _ in 0..depth0 {
                w = self.apply(&w);
            }
            lens[c] = w.len() as u128;
            occ[c] = w.windows(len).filter(|f| lookup.contains(f)).count() as u128;
            prefix[c] = w[..pad].to_vec();
            suffix[c] = w[w.len() - pad..].to_vec();
        }

        let mut best: Option<Interval> = None;
        loop {
            let mut lo: Option<Rational> = None;
            let mut hi: Option<Rational> = None;
            for c in 0..k {
                let l = BigInt::from(lens[c]);
                let a = Rational::new(BigInt::from(occ[c]), l.clone());
                let b = Rational::new(BigInt::from(occ[c] + pad as u128), l);
                lo = Some(match lo {
                    Some(x) if x < a => x,
                    _ => a,
                });
                hi = Some(match hi {
                    Some(x) if x > b => x,
                    _ => b,
                });
            }
            let one = Rational::from_integer(1.into());
            let lo = lo.expect("nonempty alphabet");
            let hi = hi.expect("nonempty alphabet").min(one);
            let current = match best {
                Some(prev) => Interval::new(prev.lo.max(lo), prev.hi.min(hi)),
                None => Interval::new(lo, hi),
            };
            if &current.width() <= tol {
                return Ok(current);
            }
            best = Some(current);

            if lens.iter().any(|&l| l > LENGTH_LIMIT) {
                return Err(Error::Precondition(format!(
                    "frequency tolerance {tol} not reached before block lengths overflow"
                )));
            }
            let mut straddle: HashMap<(u8, u8), u128> = HashMap::new();
            let mut next_occ = vec![0u128; k];
            let mut next_len = vec![0u128; k];
            for (c, img) in self.images.iter().enumerate() {
                let mut total = 0u128;
                let mut length = 0u128;
                for (i, &x) in img.iter().enumerate() {
                    total += occ[x as usize];
                    length += lens[x as usize];
                    if pad > 0 && i + 1 < img.len() {
                        let y = img[i + 1];
                        total += *straddle.entry((x, y)).or_insert_with(|| {
                            let mut joint = suffix[x as usize].clone();
                            joint.extend_from_slice(&prefix[y as usize]);
                            joint.windows(len).filter(|f| lookup.contains(f)).count() as u128
                        });
                    }
                }
                next_occ[c] = total;
                next_len[c] = length;
            }
            let next_prefix: Vec<Vec<u8>> = self
                .images
                .iter()
                .map(|img| prefix[img[0] as usize].clone())
                .collect();
            let next_suffix: Vec<Vec<u8>> = self
                .images
                .iter()
                .map(|img| suffix[*img.last().expect("non-erasing") as usize].clone())
                .collect();
            occ = next_occ;
            lens = next_len;
            prefix = next_prefix;
            suffix = next_suffix;
        }
    }
}
