//! Reproductions of the published fit and cost tables, side by side with the
//! published values.

use serde::Serialize;

use crate::assembly::{assemble, Method};
use crate::dispersion::DispersionAnalyzer;
use crate::error::{Error, Result};
use crate::materials::MaterialModel;
use crate::mesh::UnitCellMesh;
use crate::published::{relative_deviation, Published};
use crate::sweep::{cost_model, required_ne, wavelength_for, worst_case_over_directions, MethodFits, SearchOptions};
use crate::symbol::TimeScheme;

/// One method of a fit table. `*_alpha` is the constant at the nominal
/// order (`2p` and `p+1`), `*_beta` the freely fitted order.
#[derive(Clone, Debug, Serialize)]
pub struct FitTableRow {
    pub method: String,
    pub disp_alpha: f64,
    pub disp_beta: f64,
    pub disp_alpha_published: f64,
    pub disp_beta_published: f64,
    pub disp_alpha_rel_dev: Option<f64>,
    pub vec_alpha: Option<f64>,
    pub vec_beta: Option<f64>,
    pub vec_alpha_published: f64,
    pub vec_beta_published: f64,
    pub vec_alpha_rel_dev: Option<f64>,
}

pub fn fit_table(fits: &[MethodFits], elastic: bool, published: &Published) -> Result<Vec<FitTableRow>> {
    fits.iter()
        .map(|f| {
            let p = published
                .fit(elastic, &f.method)
                .ok_or_else(|| Error::InvalidParameter(format!("no published fit for {}", f.method)))?;
            let vec_alpha = f.vec_nominal.map(|v| v.alpha);
            Ok(FitTableRow {
                method: f.method.clone(),
                disp_alpha: f.disp_nominal.alpha,
                disp_beta: f.disp.beta,
                disp_alpha_published: p.disp_alpha,
                disp_beta_published: p.disp_beta,
                disp_alpha_rel_dev: relative_deviation(f.disp_nominal.alpha, p.disp_alpha),
                vec_alpha,
                vec_beta: f.vec.map(|v| v.beta),
                vec_alpha_published: p.vec_alpha,
                vec_beta_published: p.vec_beta,
                vec_alpha_rel_dev: vec_alpha.and_then(|a| relative_deviation(a, p.vec_alpha)),
            })
        })
        .collect()
}

/// Resolution and cost needed for a target dispersion error.
#[derive(Clone, Debug, Serialize)]
pub struct CostTableRow {
    pub method: String,
    pub ne: f64,
    pub n_vec: f64,
    pub n_mat: f64,
    pub n_dt: f64,
    pub n_comp: f64,
    pub e_vec: f64,
    pub ne_published: f64,
    pub n_vec_published: f64,
    pub n_mat_published: f64,
    pub n_dt_published: f64,
    pub n_comp_published: f64,
    pub e_vec_published: f64,
    pub n_vec_rel_dev: Option<f64>,
    pub n_mat_rel_dev: Option<f64>,
    pub n_comp_rel_dev: Option<f64>,
}

/// Evaluates one method at `N_E = (α/target)^{1/2p}` from its nominal-order fit.
pub fn cost_row(
    fits: &MethodFits,
    target: f64,
    mesh: &UnitCellMesh,
    material: &MaterialModel,
    search: &SearchOptions,
    published: &Published,
) -> Result<CostTableRow> {
    let method: Method = fits.method.parse()?;
    let p = method.degree();
    let ne = required_ne(fits.disp_nominal.alpha, 2.0 * p as f64, target)?;
    let lambda = wavelength_for(mesh, ne);
    let ops = assemble(method, mesh, material)?;
    let an = DispersionAnalyzer::new(&ops, material, TimeScheme::new(p, fits.s_max)?)?;
    let cost = cost_model(&ops, &an, lambda);
    let e_vec = worst_case_over_directions(&an, lambda, search)?.e_vec;
    let table = published.cost_table(target)?;
    let r = table
        .rows
        .iter()
        .find(|r| r.method == fits.method)
        .ok_or_else(|| Error::InvalidParameter(format!("no published row for {}", fits.method)))?;
    Ok(CostTableRow {
        method: fits.method.clone(),
        ne,
        n_vec: cost.n_vec,
        n_mat: cost.n_mat,
        n_dt: cost.n_dt,
        n_comp: cost.n_comp,
        e_vec,
        ne_published: r.ne,
        n_vec_published: r.n_vec,
        n_mat_published: r.n_mat,
        n_dt_published: r.n_dt,
        n_comp_published: r.n_comp,
        e_vec_published: r.e_vec,
        n_vec_rel_dev: relative_deviation(cost.n_vec, r.n_vec),
        n_mat_rel_dev: relative_deviation(cost.n_mat, r.n_mat),
        n_comp_rel_dev: relative_deviation(cost.n_comp, r.n_comp),
    })
}
