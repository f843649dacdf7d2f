//! Age-by-week composition of weekly deaths from a latent surface.

mod grid;
mod model;
mod predictive;

pub use grid::{composition_from_surface, expected_band_deaths, AgeBand, AgeGrid, CDC_BANDS, N_AGES};
pub use model::{prior_weekly_totals, MortalityConfig, MortalityModel, MortalityParams, PosteriorTerms};
pub use predictive::{
    concentration_draws, dirichlet_multinomial_logpmf, mortality_rate, predictive_rescale, sample_dirichlet_multinomial,
    PredictiveDraws,
};
