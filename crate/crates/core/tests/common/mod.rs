#![allow(dead_code)]

use hallq::hamiltonian::ModelSpec;
use hallq::models::{make_model, ModelRecipe, RecipeName};

/// Every zoo recipe at a size whose sector fits the dense path.
/// Fermion models use two particles so the many-body sector stays small.
pub fn dense_zoo() -> Vec<ModelSpec> {
    RecipeName::ALL
        .iter()
        .map(|&name| {
            let (recipe, l) = match name {
                RecipeName::QwzFermion | RecipeName::QwzInteracting => (ModelRecipe::new(name).with_charge(2), 3),
                RecipeName::BosonChain => (ModelRecipe::new(name), 12),
                _ => (ModelRecipe::new(name), 3),
            };
            make_model(&recipe, l).unwrap()
        })
        .collect()
}

pub fn model(name: RecipeName, l: usize) -> ModelSpec {
    make_model(&ModelRecipe::new(name), l).unwrap()
}

/// Zoo models with a unique ground state at the origin, in the representation used for dynamics.
pub fn gapped_systems(delta: f64) -> Vec<hallq::loops::FluxSystem> {
    use hallq::loops::{FluxSystem, Representation};
    use hallq::quasiadiabatic::{Filter, FilterKind};
    let filter = Filter::new(FilterKind::Spline, delta).unwrap();
    vec![
        FluxSystem::new(model(RecipeName::TrivialProduct, 3), filter, Representation::Fock).unwrap(),
        FluxSystem::new(model(RecipeName::XyFluxBoson, 3), filter, Representation::Fock).unwrap(),
        FluxSystem::new(model(RecipeName::BosonChain, 12), filter, Representation::Fock).unwrap(),
        FluxSystem::new(model(RecipeName::QwzFermion, 3), filter, Representation::Slater).unwrap(),
    ]
}
