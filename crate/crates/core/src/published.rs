//! Published reference values used by the table reproductions.

use serde::Deserialize;

use crate::error::{Error, Result};

const DATA: &str = include_str!("../data/published.json");

#[derive(Clone, Debug, Deserialize)]
pub struct PublishedFit {
    pub method: String,
    pub disp_alpha: f64,
    pub disp_beta: f64,
    /// Zero for methods whose eigenvector error vanishes.
    pub vec_alpha: f64,
    pub vec_beta: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct PublishedCostRow {
    pub method: String,
    pub ne: f64,
    pub n_vec: f64,
    pub n_mat: f64,
    pub n_dt: f64,
    pub n_comp: f64,
    pub e_vec: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct PublishedCostTable {
    pub target: f64,
    pub rows: Vec<PublishedCostRow>,
}

/// Quoted ratios from the mesh-quality, P/S-ratio and penalty studies.
#[derive(Clone, Debug, Deserialize)]
pub struct PublishedRatios {
    pub zscale_half_max: f64,
    pub zscale_tenth_range: [f64; 2],
    pub dg_ps10_max: f64,
    pub ml1_ps10: f64,
    pub ml_higher_ps10: f64,
    pub dg_step_ratio: f64,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Published {
    pub acoustic_fits: Vec<PublishedFit>,
    pub elastic_fits: Vec<PublishedFit>,
    pub acoustic_cost: Vec<PublishedCostTable>,
    pub ratios: PublishedRatios,
}

impl Published {
    pub fn load() -> Result<Self> {
        Ok(serde_json::from_str(DATA)?)
    }

    pub fn fit(&self, elastic: bool, method: &str) -> Option<&PublishedFit> {
        let list = if elastic {
            &self.elastic_fits
        } else {
            &self.acoustic_fits
        };
        list.iter().find(|f| f.method == method)
    }

    pub fn cost_table(&self, target: f64) -> Result<&PublishedCostTable> {
        self.acoustic_cost
            .iter()
            .find(|t| (t.target - target).abs() <= 1e-12 * target)
            .ok_or_else(|| Error::InvalidParameter(format!("no published cost table for e = {target}")))
    }
}

/// `(computed - published) / published`, or `None` when the published value is zero.
pub fn relative_deviation(computed: f64, published: f64) -> Option<f64> {
    if published == 0.0 {
        None
    } else {
        Some((computed - published) / published)
    }
}
