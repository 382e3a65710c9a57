//! Shared handles for the offline pipeline: nominal vehicle, actuator maps,
//! tracking controller, and the measured prediction-error bound, all built
//! from one [`Config`].

use crate::config::Config;
use crate::vehicle::{
    measure_prediction_error, ActuatorMap, PredictionErrorBound, TrackingController, VehicleParams,
};
use crate::Result;

#[derive(Debug, Clone)]
pub struct PipelineContext {
    pub cfg: Config,
    pub params: VehicleParams,
    pub act: ActuatorMap,
    pub controller: TrackingController,
    pub eps: PredictionErrorBound,
}

impl PipelineContext {
    /// Build with an already-measured prediction-error bound.
    pub fn with_eps(cfg: &Config, eps: PredictionErrorBound) -> Result<Self> {
        cfg.validate()?;
        let params = VehicleParams::from_config(&cfg.vehicle)?;
        let act = ActuatorMap::from_config(&cfg.actuator)?;
        let controller = TrackingController::new(params, act, cfg.controller.clone());
        Ok(PipelineContext { cfg: cfg.clone(), params, act, controller, eps })
    }

    /// Build and measure the prediction-error bound from paired rollouts.
    pub fn measure(cfg: &Config, seed: u64) -> Result<Self> {
        let mut ctx = Self::with_eps(cfg, PredictionErrorBound::zero())?;
        ctx.eps = measure_prediction_error(
            &ctx.params,
            &ctx.act,
            &cfg.plant,
            cfg.error_fn.eps_trials,
            cfg.error_fn.eps_horizon,
            cfg.error_fn.eps_inflation,
            crate::rng::derive_seed(seed, "eps", 0),
        )?;
        Ok(ctx)
    }
}
