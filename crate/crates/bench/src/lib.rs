//! Fixed problem instances shared by the benchmarks.

use itr_core::pipeline::a_learning;
use itr_core::sim::dgp::models_for;
use itr_core::sim::generate;
use itr_core::{Dataset, Family, ModelSpec, NuisanceSpec, Nuisances, PluginFit, Scenario, SimConfig, ThetaEstimate};

pub struct Instance {
    pub config: SimConfig,
    pub data: Dataset,
    pub spec: ModelSpec,
    pub nuisance_spec: NuisanceSpec,
    pub nuisances: Nuisances,
    pub initial: ThetaEstimate,
}

/// First replicate of the both-correct scenario with its A-learning fit.
pub fn instance(family: Family, n: usize, p: usize) -> Instance {
    let mut config = SimConfig::new(family, Scenario::S3BothCorrect, n, p);
    config.n_reps = 1;
    config.test_size = 1000;
    let (spec, nuisance_spec) = models_for(&config).expect("valid config");
    let (data, _) = generate(&config, 0).expect("generator succeeds");
    let nuisances = Nuisances::fit(&data, &spec, &nuisance_spec, PluginFit::Unpenalized).expect("nuisance fit");
    let initial = a_learning(&data, &spec, &nuisances, &Default::default()).expect("initial fit");
    Instance {
        config,
        data,
        spec,
        nuisance_spec,
        nuisances,
        initial,
    }
}
