//! The eight spatial fields (S,E,I,R x Home,Mobile) on a grid.

use crate::grid::{GridSpec, REGION_HOMES};
use serde::{Deserialize, Serialize};

pub const N_COMPARTMENTS: usize = 4;
pub const N_GROUPS: usize = 2;
pub const N_FIELDS: usize = N_COMPARTMENTS * N_GROUPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Compartment {
    Susceptible,
    Exposed,
    Infectious,
    Recovered,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [
        Compartment::Susceptible,
        Compartment::Exposed,
        Compartment::Infectious,
        Compartment::Recovered,
    ];

    pub fn short(&self) -> &'static str {
        match self {
            Compartment::Susceptible => "S",
            Compartment::Exposed => "E",
            Compartment::Infectious => "I",
            Compartment::Recovered => "R",
        }
    }

    #[inline]
    pub fn index(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    Home,
    Mobile,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Home, Group::Mobile];

    pub fn short(&self) -> &'static str {
        match self {
            Group::Home => "H",
            Group::Mobile => "M",
        }
    }

    #[inline]
    pub fn index(&self) -> usize {
        *self as usize
    }
}

/// Field index in the canonical (compartment, group) ordering used for the
/// flattened state layout: S_H, S_M, E_H, E_M, I_H, I_M, R_H, R_M.
#[inline]
pub fn field_index(c: Compartment, g: Group) -> usize {
    c.index() * N_GROUPS + g.index()
}

/// All (compartment, group) pairs in flattened-layout order.
pub fn field_order() -> [(Compartment, Group); N_FIELDS] {
    let mut out = [(Compartment::Susceptible, Group::Home); N_FIELDS];
    for c in Compartment::ALL {
        for g in Group::ALL {
            out[field_index(c, g)] = (c, g);
        }
    }
    out
}

/// People counts per cell for all eight (compartment, group) fields, plus
/// the simulation time in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateField {
    /// `fields[field_index(c,g)][cell]`
    pub fields: [Vec<f64>; N_FIELDS],
    /// Time in seconds.
    pub t: f64,
}

impl StateField {
    pub fn zeros(n_cells: usize) -> Self {
        Self { fields: std::array::from_fn(|_| vec![0.0; n_cells]), t: 0.0 }
    }

    /// Default initial condition: 2000 susceptible-Home people per region-2
    /// cell, 0.1% of whom have been moved to exposed-Home.
    pub fn default_init(grid: &GridSpec) -> Self {
        let mut s = Self::zeros(grid.n_cells());
        let sh = field_index(Compartment::Susceptible, Group::Home);
        let eh = field_index(Compartment::Exposed, Group::Home);
        for cell in 0..grid.n_cells() {
            if grid.region(cell) == REGION_HOMES {
                let total = 2000.0;
                let exposed = total * 0.001;
                s.fields[sh][cell] = total - exposed;
                s.fields[eh][cell] = exposed;
            }
        }
        s
    }

    #[inline]
    pub fn field(&self, c: Compartment, g: Group) -> &[f64] {
        &self.fields[field_index(c, g)]
    }

    #[inline]
    pub fn field_mut(&mut self, c: Compartment, g: Group) -> &mut Vec<f64> {
        &mut self.fields[field_index(c, g)]
    }

    pub fn n_cells(&self) -> usize {
        self.fields[0].len()
    }

    /// Group population N_h per cell.
    pub fn group_population(&self, g: Group, cell: usize) -> f64 {
        Compartment::ALL.iter().map(|&c| self.field(c, g)[cell]).sum()
    }

    /// Total population over all fields and cells (fixed summation order).
    pub fn total_population(&self) -> f64 {
        let mut total = 0.0;
        for f in &self.fields {
            for &v in f {
                total += v;
            }
        }
        total
    }

    /// Flatten to the canonical row layout: for each (compartment, group) in
    /// `field_order()`, all cells in grid order. Length `8 * n_cells`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(N_FIELDS * self.n_cells());
        for f in &self.fields {
            row.extend_from_slice(f);
        }
        row
    }

    /// Inverse of [`flatten`]; panics if the length is not a multiple of 8.
    pub fn from_flat(row: &[f64], t: f64) -> Self {
        assert_eq!(row.len() % N_FIELDS, 0, "flat state length must be 8*n_cells");
        let n = row.len() / N_FIELDS;
        let mut s = Self::zeros(n);
        for (i, f) in s.fields.iter_mut().enumerate() {
            f.copy_from_slice(&row[i * n..(i + 1) * n]);
        }
        s.t = t;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_init_counts() {
        let grid = GridSpec::default_cross();
        let s = StateField::default_init(&grid);
        assert!((s.total_population() - 8000.0).abs() < 1e-12);
        let sh = s.field(Compartment::Susceptible, Group::Home);
        let eh = s.field(Compartment::Exposed, Group::Home);
        let home = grid.cell_index(4, 4, 0);
        assert_eq!(sh[home], 1998.0);
        assert_eq!(eh[home], 2.0);
        assert_eq!(s.field(Compartment::Susceptible, Group::Mobile)[home], 0.0);
    }

    #[test]
    fn flatten_roundtrip_bitwise() {
        let grid = GridSpec::default_cross();
        let mut s = StateField::default_init(&grid);
        s.t = 123.0;
        // spread some irrational values around
        for (i, f) in s.fields.iter_mut().enumerate() {
            for (j, v) in f.iter_mut().enumerate() {
                *v += ((i * 31 + j) as f64).sqrt() * 1e-3;
            }
        }
        let flat = s.flatten();
        assert_eq!(flat.len(), 800);
        let back = StateField::from_flat(&flat, s.t);
        assert_eq!(back, s);
    }
}
