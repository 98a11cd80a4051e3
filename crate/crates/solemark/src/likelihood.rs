//! The auxiliary-variable likelihood and its per-shoe caches.
//!
//! Integrating out the per-cell gamma scores leaves, per shoe, a latent cell
//! assignment `Z_n` for every accidental (within kernel reach of the
//! observed location) and one positive scalar `u`. The augmented likelihood
//! factors over shoes as
//!
//! ```text
//! u^(N-1)/G(N) * prod_a G(q + C_a) (w_a phi_a)^C_a / (u w_a phi_a + 1)^(q + C_a)
//!             / G(q)^|A| * prod_n k(z_n - x_n)
//! ```
//!
//! where `C_a` counts assignments to cell `a`. Everything is computed in the
//! log domain; the `G(q)^|A|` prefactor cancels per-cell for all cells with
//! `C_a = 0`, so those cells only contribute `-q * log(u w phi + 1)`.
//!
//! Because `w` is constant on coarse regions and `phi` constant on shape
//! codes, active cells are grouped by `(region, code)` pairs once per shoe;
//! all likelihood sums then run over a few hundred groups instead of every
//! cell.

use std::collections::BTreeMap;

use crate::coarse::CoarseMap;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::{shape_code_field, ContactSurface, GridIndex, GRID_WIDTH, SHAPE_CODES};
use crate::kernel::{Kernel, KERNEL_REACH};
use crate::params::GlobalParams;
use crate::util::ln_gamma;

/// Which model components are active. The full model has everything on; the
/// ablations fix the corresponding variables at one (or, for the kernel,
/// disable smoothing entirely).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelVariant {
    pub scores_on: bool,
    pub kernel_on: bool,
    pub w_on: bool,
    pub phi_on: bool,
}

impl ModelVariant {
    pub fn full() -> Self {
        ModelVariant {
            scores_on: true,
            kernel_on: true,
            w_on: true,
            phi_on: true,
        }
    }

    pub fn no_scores() -> Self {
        ModelVariant {
            scores_on: false,
            ..Self::full()
        }
    }

    pub fn no_kernel() -> Self {
        ModelVariant {
            kernel_on: false,
            ..Self::full()
        }
    }

    pub fn no_scores_kernel() -> Self {
        ModelVariant {
            scores_on: false,
            kernel_on: false,
            ..Self::full()
        }
    }

    pub fn no_w() -> Self {
        ModelVariant {
            w_on: false,
            ..Self::full()
        }
    }

    pub fn no_phi() -> Self {
        ModelVariant {
            phi_on: false,
            ..Self::full()
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.scores_on, self.kernel_on, self.w_on, self.phi_on) {
            (true, true, true, true) => "full",
            (false, true, true, true) => "no-scores",
            (true, false, true, true) => "no-kernel",
            (false, false, true, true) => "no-scores-kernel",
            (true, true, false, true) => "no-w",
            (true, true, true, false) => "no-phi",
            _ => "custom",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "no-scores" => Ok(Self::no_scores()),
            "no-kernel" => Ok(Self::no_kernel()),
            "no-scores-kernel" => Ok(Self::no_scores_kernel()),
            "no-w" => Ok(Self::no_w()),
            "no-phi" => Ok(Self::no_phi()),
            other => Err(Error::Config(format!("unknown model variant '{other}'"))),
        }
    }

    /// The smoothing kernel this variant applies to `theta`'s parameters.
    pub fn kernel(&self, theta: &GlobalParams) -> Kernel {
        if self.kernel_on {
            Kernel::from_params(&theta.kparams)
        } else {
            Kernel::identity()
        }
    }
}

/// Substitute the variant's fixed values into a parameter vector: disabled
/// weights and shape effects become one.
pub fn apply_variant(theta: &GlobalParams, v: ModelVariant) -> GlobalParams {
    let mut out = theta.clone();
    if !v.w_on {
        out.w_e = vec![1.0; out.w_e.len()];
    }
    if !v.phi_on {
        out.phi = [1.0; SHAPE_CODES];
    }
    out
}

/// Active cells of one shoe grouped by `(region, shape code)`, plus the
/// shoe's accidental cells. Groups are sorted by code so per-code slices are
/// contiguous.
#[derive(Debug, Clone)]
pub struct CellGroup {
    pub region: u16,
    pub code: u8,
    pub count: u32,
}

#[derive(Debug, Clone)]
pub struct ShoeCells {
    pub shoe_id: String,
    pub groups: Vec<CellGroup>,
    code_start: [usize; SHAPE_CODES + 2],
    codes: Vec<u8>,
    pub acc_cells: Vec<u32>,
}

impl ShoeCells {
    pub fn build(
        mask: &ContactSurface,
        accidentals: &[(f64, f64)],
        cm: &CoarseMap,
    ) -> Result<ShoeCells> {
        let field = shape_code_field(mask);
        let mut tally: BTreeMap<(u8, u16), u32> = BTreeMap::new();
        for &cell in cm.active_cells() {
            let idx = cell as usize;
            let key = (field.at_flat(idx), cm.region_at_flat(idx));
            *tally.entry(key).or_insert(0) += 1;
        }
        let mut groups = Vec::with_capacity(tally.len());
        for ((code, region), count) in tally {
            groups.push(CellGroup {
                region,
                code,
                count,
            });
        }
        let mut code_start = [0usize; SHAPE_CODES + 2];
        for g in &groups {
            code_start[g.code as usize + 1] += 1;
        }
        for c in 1..code_start.len() {
            code_start[c] += code_start[c - 1];
        }

        let mut acc_cells = Vec::with_capacity(accidentals.len());
        for (n, &(x1, x2)) in accidentals.iter().enumerate() {
            let cell = GridIndex::cell_of(x1, x2)?;
            let reachable = window_cells(cell)
                .any(|z| cm.region_at_flat(z as usize) > 0);
            if !reachable {
                return Err(Error::ImpossibleAssignment {
                    shoe: mask.shoe_id.clone(),
                    accidental: n,
                });
            }
            acc_cells.push(cell.flat() as u32);
        }
        Ok(ShoeCells {
            shoe_id: mask.shoe_id.clone(),
            groups,
            code_start,
            codes: field.codes().to_vec(),
            acc_cells,
        })
    }

    pub fn n_accidentals(&self) -> usize {
        self.acc_cells.len()
    }

    /// Groups whose cells carry shape code `code`.
    pub fn groups_with_code(&self, code: u8) -> &[CellGroup] {
        &self.groups[self.code_start[code as usize]..self.code_start[code as usize + 1]]
    }

    pub fn code_at(&self, cell: u32) -> u8 {
        self.codes[cell as usize]
    }

    /// `w * phi` at a cell; zero off the active set.
    pub fn wphi_at(&self, cell: u32, theta: &GlobalParams, cm: &CoarseMap) -> f64 {
        let r = cm.region_at_flat(cell as usize);
        if r == 0 {
            return 0.0;
        }
        theta.w_e[r as usize - 1] * theta.phi[self.codes[cell as usize] as usize - 1]
    }

    /// `sum_a w_a phi_a` over the active set.
    pub fn sum_wphi(&self, theta: &GlobalParams) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                g.count as f64 * theta.w_e[g.region as usize - 1] * theta.phi[g.code as usize - 1]
            })
            .sum()
    }

    /// `sum_a log(u w_a phi_a + 1)` over the active set.
    pub fn log1p_sum(&self, theta: &GlobalParams, u: f64) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                let wphi =
                    theta.w_e[g.region as usize - 1] * theta.phi[g.code as usize - 1];
                g.count as f64 * (u * wphi).ln_1p()
            })
            .sum()
    }
}

/// Iterator over the in-grid flat indices of the kernel window around a cell.
pub fn window_cells(center: GridIndex) -> impl Iterator<Item = u32> {
    let (a1, a2) = (center.a1, center.a2);
    (-KERNEL_REACH..=KERNEL_REACH).flat_map(move |dj| {
        (-KERNEL_REACH..=KERNEL_REACH).filter_map(move |di| {
            let (b1, b2) = (a1 + di, a2 + dj);
            GridIndex::in_bounds(b1, b2)
                .then(|| ((b2 as usize - 1) * GRID_WIDTH + (b1 as usize - 1)) as u32)
        })
    })
}

/// Per-dataset caches, one [`ShoeCells`] per shoe. Building validates that
/// every accidental can reach the active set.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub shoes: Vec<ShoeCells>,
}

impl Workspace {
    pub fn build(data: &Dataset) -> Result<Workspace> {
        let shoes = data
            .shoes
            .iter()
            .map(|s| ShoeCells::build(&s.mask, &s.accidentals, &data.coarse))
            .collect::<Result<Vec<_>>>()?;
        Ok(Workspace { shoes })
    }
}

/// Latent state for one shoe: cell assignments, their histogram, and the
/// gamma auxiliary scalar.
#[derive(Debug, Clone)]
pub struct ShoeAux {
    pub z: Vec<u32>,
    pub u: f64,
    pub counts: BTreeMap<u32, u32>,
}

impl ShoeAux {
    pub fn from_assignments(z: Vec<u32>, u: f64) -> ShoeAux {
        let mut counts = BTreeMap::new();
        for &cell in &z {
            *counts.entry(cell).or_insert(0) += 1;
        }
        ShoeAux { z, u, counts }
    }

    pub fn count_at(&self, cell: u32) -> u32 {
        self.counts.get(&cell).copied().unwrap_or(0)
    }

    pub fn move_assignment(&mut self, n: usize, to: u32) {
        let from = self.z[n];
        if from == to {
            return;
        }
        match self.counts.get_mut(&from) {
            Some(c) if *c > 1 => *c -= 1,
            _ => {
                self.counts.remove(&from);
            }
        }
        *self.counts.entry(to).or_insert(0) += 1;
        self.z[n] = to;
    }

    /// Full recount of `z`; used by debug-mode consistency checks.
    pub fn consistent(&self) -> bool {
        let mut fresh: BTreeMap<u32, u32> = BTreeMap::new();
        for &cell in &self.z {
            *fresh.entry(cell).or_insert(0) += 1;
        }
        fresh == self.counts && self.counts.values().map(|c| *c as usize).sum::<usize>() == self.z.len()
    }
}

/// Latent state for every shoe in a dataset.
#[derive(Debug, Clone)]
pub struct AuxiliaryState {
    pub shoes: Vec<ShoeAux>,
}

/// Log of the augmented likelihood over all shoes.
///
/// Errors with `ImpossibleAssignment` if any assignment sits on a cell with
/// zero weight. Exact log-domain evaluation; shoes with no accidentals
/// contribute nothing.
pub fn augmented_loglik(
    theta: &GlobalParams,
    aux: &AuxiliaryState,
    ws: &Workspace,
    cm: &CoarseMap,
    variant: ModelVariant,
) -> Result<f64> {
    assert_eq!(aux.shoes.len(), ws.shoes.len());
    let kernel = variant.kernel(theta);
    let mut total = 0.0;
    for (cells, sa) in ws.shoes.iter().zip(&aux.shoes) {
        total += shoe_loglik(theta, sa, cells, cm, &kernel, variant)?;
    }
    Ok(total)
}

fn shoe_loglik(
    theta: &GlobalParams,
    sa: &ShoeAux,
    cells: &ShoeCells,
    cm: &CoarseMap,
    kernel: &Kernel,
    variant: ModelVariant,
) -> Result<f64> {
    let n = cells.n_accidentals();
    if n == 0 {
        return Ok(0.0);
    }
    debug_assert_eq!(sa.z.len(), n);
    let q = theta.q;
    let mut ll = 0.0;

    // kernel displacement terms
    if variant.kernel_on {
        for (&z, &x) in sa.z.iter().zip(&cells.acc_cells) {
            let za = GridIndex::from_flat(z as usize);
            let xa = GridIndex::from_flat(x as usize);
            let k = kernel
                .weight(za.a1 - xa.a1, za.a2 - xa.a2)
                .map_err(|_| assignment_error(cells, sa, z))?;
            if k <= 0.0 {
                return Err(assignment_error(cells, sa, z));
            }
            ll += k.ln();
        }
    }

    // occupied-cell terms
    let mut counted_log1p = 0.0;
    for (&cell, &c) in &sa.counts {
        let wphi = cells.wphi_at(cell, theta, cm);
        if wphi <= 0.0 {
            return Err(assignment_error(cells, sa, cell));
        }
        let c = c as f64;
        if variant.scores_on {
            ll += ln_gamma(q + c) - ln_gamma(q) + c * wphi.ln();
            counted_log1p += c * (sa.u * wphi).ln_1p();
        } else {
            ll += c * wphi.ln();
        }
    }

    if variant.scores_on {
        let nf = n as f64;
        ll += (nf - 1.0) * sa.u.ln() - ln_gamma(nf);
        // (q + C_a) log(u w phi + 1) over all active cells: the q part runs
        // over the grouped cells, the count part over occupied cells only.
        ll -= q * cells.log1p_sum(theta, sa.u) + counted_log1p;
    } else {
        ll -= n as f64 * cells.sum_wphi(theta).ln();
    }
    Ok(ll)
}

fn assignment_error(cells: &ShoeCells, sa: &ShoeAux, cell: u32) -> Error {
    let idx = sa.z.iter().position(|&z| z == cell).unwrap_or(0);
    Error::ImpossibleAssignment {
        shoe: cells.shoe_id.clone(),
        accidental: idx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::tiny_map;
    use crate::kernel::KernelParams;

    fn unit_theta(n_regions: usize) -> GlobalParams {
        GlobalParams {
            q: 1.0,
            w_e: vec![1.0; n_regions],
            phi: [1.0; SHAPE_CODES],
            kparams: KernelParams::zeros(),
        }
    }

    fn single_cell_setup() -> (CoarseMap, Workspace, AuxiliaryState) {
        let cm = tiny_map(1, 1, 1);
        let cell = cm.active_cells()[0];
        let a = GridIndex::from_flat(cell as usize);
        let mask = ContactSurface::from_fn("one", |x, y| x == a.a1 && y == a.a2);
        let x = ((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5);
        let data = Dataset {
            coarse: cm.clone(),
            shoes: vec![crate::dataset::ShoeRecord {
                id: "one".into(),
                mask,
                accidentals: vec![x],
            }],
        };
        let ws = Workspace::build(&data).unwrap();
        let aux = AuxiliaryState {
            shoes: vec![ShoeAux::from_assignments(vec![cell], 1.0)],
        };
        (cm, ws, aux)
    }

    #[test]
    fn single_cell_value_matches_hand_evaluation() {
        // One active cell, N=1, u=1, q=1, w=phi=1, no kernel:
        // Gamma(2) * 1 / (1+1)^2 = 1/4.
        let (cm, ws, aux) = single_cell_setup();
        let theta = unit_theta(cm.n_regions());
        let ll =
            augmented_loglik(&theta, &aux, &ws, &cm, ModelVariant::no_kernel()).unwrap();
        assert!((ll - 0.25f64.ln()).abs() < 1e-12, "{ll}");
    }

    #[test]
    fn rescaling_phi_shifts_loglik_consistently() {
        let cm = tiny_map(2, 2, 5);
        let mask = ContactSurface::from_fn("m", |a1, a2| (a1 + 2 * a2) % 3 != 0);
        let pts: Vec<(f64, f64)> = cm.active_cells()[..6]
            .iter()
            .map(|&c| {
                let a = GridIndex::from_flat(c as usize);
                ((a.a1 - 1) as f64 + 0.4, (a.a2 - 1) as f64 + 0.6)
            })
            .collect();
        let data = Dataset {
            coarse: cm.clone(),
            shoes: vec![crate::dataset::ShoeRecord {
                id: "m".into(),
                mask,
                accidentals: pts,
            }],
        };
        let ws = Workspace::build(&data).unwrap();
        let z = ws.shoes[0].acc_cells.clone();
        let aux = AuxiliaryState {
            shoes: vec![ShoeAux::from_assignments(z, 0.7)],
        };
        let mut theta = unit_theta(cm.n_regions());
        theta.q = 1.3;
        let base =
            augmented_loglik(&theta, &aux, &ws, &cm, ModelVariant::full()).unwrap();
        let mut halved = theta.clone();
        for p in halved.phi.iter_mut() {
            *p *= 0.5;
        }
        let shifted =
            augmented_loglik(&halved, &aux, &ws, &cm, ModelVariant::full()).unwrap();
        // analytic decomposition of the shift: the count terms move by
        // N_total * log(1/2), the (q + C) log(u w phi + 1) terms by the
        // difference of the denominator sums
        let cells = &ws.shoes[0];
        let sa = &aux.shoes[0];
        let n_total = cells.n_accidentals() as f64;
        let denom = |th: &GlobalParams| {
            let grid = cells.log1p_sum(th, sa.u);
            let occ: f64 = sa
                .counts
                .iter()
                .map(|(&cell, &c)| c as f64 * (sa.u * cells.wphi_at(cell, th, &cm)).ln_1p())
                .sum();
            th.q * grid + occ
        };
        let expect = n_total * 0.5f64.ln() - denom(&halved) + denom(&theta);
        assert!(
            ((shifted - base) - expect).abs() < 1e-10,
            "delta {} vs {expect}",
            shifted - base
        );
    }

    #[test]
    fn shoe_order_does_not_matter() {
        let cm = tiny_map(2, 2, 5);
        let mk = |id: &str, k: usize| {
            let mask = ContactSurface::from_fn(id, |a1, a2| (a1 + a2 + k as i32) % 2 == 0);
            let pts: Vec<(f64, f64)> = cm.active_cells()[k..k + 4]
                .iter()
                .map(|&c| {
                    let a = GridIndex::from_flat(c as usize);
                    ((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5)
                })
                .collect();
            crate::dataset::ShoeRecord {
                id: id.into(),
                mask,
                accidentals: pts,
            }
        };
        let s1 = mk("a", 0);
        let s2 = mk("b", 9);
        let theta = unit_theta(cm.n_regions());
        let eval = |shoes: Vec<crate::dataset::ShoeRecord>| {
            let data = Dataset {
                coarse: cm.clone(),
                shoes,
            };
            let ws = Workspace::build(&data).unwrap();
            let aux = AuxiliaryState {
                shoes: ws
                    .shoes
                    .iter()
                    .map(|c| ShoeAux::from_assignments(c.acc_cells.clone(), 0.5))
                    .collect(),
            };
            augmented_loglik(&theta, &aux, &ws, &cm, ModelVariant::full()).unwrap()
        };
        let fwd = eval(vec![s1.clone(), s2.clone()]);
        let rev = eval(vec![s2, s1]);
        assert!((fwd - rev).abs() < 1e-12);
    }

    #[test]
    fn relabeling_accidentals_within_a_shoe_is_invariant() {
        let cm = tiny_map(2, 2, 5);
        let mask = ContactSurface::from_fn("m", |a1, _| a1 % 2 == 0);
        let mut pts: Vec<(f64, f64)> = cm.active_cells()[..5]
            .iter()
            .map(|&c| {
                let a = GridIndex::from_flat(c as usize);
                ((a.a1 - 1) as f64 + 0.5, (a.a2 - 1) as f64 + 0.5)
            })
            .collect();
        let theta = unit_theta(cm.n_regions());
        let eval = |pts: Vec<(f64, f64)>| {
            let data = Dataset {
                coarse: cm.clone(),
                shoes: vec![crate::dataset::ShoeRecord {
                    id: "m".into(),
                    mask: mask.clone(),
                    accidentals: pts,
                }],
            };
            let ws = Workspace::build(&data).unwrap();
            let aux = AuxiliaryState {
                shoes: vec![ShoeAux::from_assignments(ws.shoes[0].acc_cells.clone(), 0.5)],
            };
            augmented_loglik(&theta, &aux, &ws, &cm, ModelVariant::full()).unwrap()
        };
        let fwd = eval(pts.clone());
        pts.reverse();
        let rev = eval(pts);
        assert!((fwd - rev).abs() < 1e-12);
    }

    #[test]
    fn assignment_on_zero_weight_cell_errors() {
        let (cm, ws, mut aux) = single_cell_setup();
        let theta = unit_theta(cm.n_regions());
        // force the assignment onto an inactive neighbor cell
        let bad = ws.shoes[0].acc_cells[0] + 1;
        aux.shoes[0] = ShoeAux::from_assignments(vec![bad], 1.0);
        let err = augmented_loglik(&theta, &aux, &ws, &cm, ModelVariant::full()).unwrap_err();
        assert!(matches!(err, Error::ImpossibleAssignment { .. }));
    }

    #[test]
    fn unreachable_accidental_is_rejected_at_build() {
        let cm = tiny_map(1, 1, 4);
        let mask = ContactSurface::from_fn("far", |_, _| true);
        // a corner cell more than 3 cells away from the active patch
        let data = Dataset {
            coarse: cm.clone(),
            shoes: vec![crate::dataset::ShoeRecord {
                id: "far".into(),
                mask,
                accidentals: vec![(10.5, 10.5)],
            }],
        };
        let err = Workspace::build(&data).unwrap_err();
        assert!(matches!(err, Error::ImpossibleAssignment { .. }));
    }

    #[test]
    fn u_monotonically_decreases_denominator_terms() {
        let (cm, ws, aux) = single_cell_setup();
        let theta = unit_theta(cm.n_regions());
        let probe = |u: f64| {
            let aux = AuxiliaryState {
                shoes: vec![ShoeAux::from_assignments(aux.shoes[0].z.clone(), u)],
            };
            augmented_loglik(&theta, &aux, &ws, &cm, ModelVariant::no_kernel()).unwrap()
        };
        // (N-1) log u vanishes for N=1, so larger u strictly lowers loglik
        assert!(probe(1.0) > probe(2.0));
        assert!(probe(2.0) > probe(5.0));
    }

    #[test]
    fn variant_substitution_fixes_components() {
        let cm = tiny_map(2, 2, 5);
        let mut theta = unit_theta(cm.n_regions());
        theta.w_e = vec![0.5, 2.0, 3.0, 4.0];
        theta.phi[0] = 0.25;
        let no_w = apply_variant(&theta, ModelVariant::no_w());
        assert!(no_w.w_e.iter().all(|&w| w == 1.0));
        assert_eq!(no_w.phi[0], 0.25);
        let no_phi = apply_variant(&theta, ModelVariant::no_phi());
        assert!(no_phi.phi.iter().all(|&p| p == 1.0));
        assert_eq!(no_phi.w_e, theta.w_e);
        let full = apply_variant(&theta, ModelVariant::full());
        assert_eq!(full, theta);
    }
}
