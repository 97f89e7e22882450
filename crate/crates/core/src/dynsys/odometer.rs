//! `Z^d` odometers: the product of inverse limits of cyclic groups with the
//! coordinatewise `+1` actions.
//!
//! A level-`k` atom is a residue tuple modulo the level-`k` grid
//! `N_j(k) = m_0^{(j)} ... m_{k-1}^{(j)}`. Base sequences are given as finite
//! lists and repeated periodically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{FiniteSubset, GroupElement};

const GRID_LIMIT: u64 = 1 << 40;
const LEVEL_SCAN_LIMIT: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Odometer {
    /// One periodic base sequence per coordinate.
    pub bases: Vec<Vec<u64>>,
}

impl Odometer {
    pub fn new(bases: Vec<Vec<u64>>) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::InvalidSystem("odometer needs at least one coordinate".into()));
        }
        for b in &bases {
            if b.is_empty() || b.contains(&0) {
                return Err(Error::InvalidSystem(format!("bad base sequence {b:?}")));
            }
        }
        Ok(Odometer { bases })
    }

    pub fn dyadic() -> Self {
        Odometer { bases: vec![vec![2]] }
    }

    pub fn rank(&self) -> usize {
        self.bases.len()
    }

    pub fn base(&self, coord: usize, level: u32) -> u64 {
        let seq = &self.bases[coord];
        seq[level as usize % seq.len()]
    }

    /// Grid sizes per coordinate at `level`.
    pub fn grid(&self, level: u32) -> Vec<u64> {
        (0..self.rank())
            .map(|j| (0..level).map(|l| self.base(j, l)).product())
            .collect()
    }

    pub fn atom_count(&self, level: u32) -> u64 {
        self.grid(level).iter().product()
    }

    pub fn check_level(&self, level: u32) -> Result<()> {
        if self.atom_count(level) > GRID_LIMIT {
            return Err(Error::Precondition(format!(
                "level {level} has more than 2^40 atoms"
            )));
        }
        Ok(())
    }

    pub fn encode(&self, residues: &[u64], grid: &[u64]) -> u64 {
        residues
            .iter()
            .zip(grid)
            .fold(0u64, |acc, (r, n)| acc * n + r)
    }

    pub fn decode(&self, mut index: u64, grid: &[u64]) -> Vec<u64> {
        let mut out = vec![0u64; grid.len()];
        for j in (0..grid.len()).rev() {
            out[j] = index % grid[j];
            index /= grid[j];
        }
        out
    }

    pub fn translate_index(&self, index: u64, grid: &[u64], g: &GroupElement) -> u64 {
        let mut rest = index;
        let mut out = 0u64;
        let mut scale = 1u64;
        for j in (0..grid.len()).rev() {
            let n = grid[j];
            let r = rest % n;
            rest /= n;
            out += scale * ((r as i128 + g.0[j] as i128).rem_euclid(n as i128) as u64);
            scale *= n;
        }
        out
    }

    pub fn project_index(&self, index: u64, fine: &[u64], coarse: &[u64]) -> u64 {
        let r: Vec<u64> = self
            .decode(index, fine)
            .iter()
            .zip(coarse)
            .map(|(r, n)| r % n)
            .collect();
        self.encode(&r, coarse)
    }

    /// Children of a coarse atom in the finer grid.
    pub fn children(&self, index: u64, coarse: &[u64], fine: &[u64]) -> Vec<u64> {
        let base = self.decode(index, coarse);
        let mut acc: Vec<Vec<u64>> = vec![Vec::new()];
        for j in 0..base.len() {
            let steps = fine[j] / coarse[j];
            let mut next = Vec::with_capacity(acc.len() * steps as usize);
            for prefix in &acc {
                for t in 0..steps {
                    let mut p = prefix.clone();
                    p.push(base[j] + t * coarse[j]);
                    next.push(p);
                }
            }
            acc = next;
        }
        acc.iter().map(|r| self.encode(r, fine)).collect()
    }

    /// Smallest level at which no non-identity element of `f` fixes an atom.
    pub fn freeness_level(&self, f: &FiniteSubset) -> Result<u32> {
        let mut level = 0;
        for g in f.iter().filter(|g| !g.is_zero()) {
            level = level.max(self.moving_level(g)?);
        }
        Ok(level)
    }

    fn moving_level(&self, g: &GroupElement) -> Result<u32> {
        for level in 0..=LEVEL_SCAN_LIMIT {
            let grid = self.grid(level);
            if grid.iter().any(|&n| n > GRID_LIMIT) {
                break;
            }
            if g.0.iter().zip(&grid).any(|(c, n)| c.rem_euclid(*n as i64) != 0) {
                return Ok(level);
            }
        }
        Err(Error::NotFree(format!(
            "translation by {g} fixes atoms at every level up to {LEVEL_SCAN_LIMIT}; bases do not grow"
        )))
    }
}
