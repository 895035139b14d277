//! Landscape exports: aliased optima, stationary points and loss surfaces.

use serde::Serialize;

use super::config::SurfaceSpec;
use super::{fmt_f64, AoaSpec, Scenario};
use crate::error::{Error, Result};
use crate::landscape::{
    enumerate_global_optima, evaluate_surface, stationary_points, GlobalOptimaSet, LossSurface, StationaryPointSet,
    SurfaceScenario,
};
use crate::linalg::CMat;
use crate::preprocess::AngleGrid;
use crate::serial::unpair;
use crate::signal::AoAVector;

pub const OPTIMA_HEADER: &str = "l,sin_alias,angle_deg";
pub const STATIONARY_HEADER: &str = "angle_deg,residual";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedSurface {
    pub spec: SurfaceSpec,
    pub surface: LossSurface,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeReport {
    pub optima: GlobalOptimaSet,
    pub stationary: StationaryPointSet,
    pub surfaces: Vec<NamedSurface>,
}

/// True angles for the surfaces: the fixed list, with the first entry
/// replaced by `landscape.true_angle_deg` when given.
fn surface_truth(scenario: &Scenario, first: f64) -> Result<AoAVector> {
    match &scenario.aoas_deg {
        AoaSpec::Fixed(v) => {
            let mut v: Vec<f64> = v.iter().map(|d| d.to_radians()).collect();
            v[0] = first;
            AoAVector::new(v)
        }
        AoaSpec::RandomInSector if scenario.users == 1 => AoAVector::new(vec![first]),
        AoaSpec::RandomInSector => Err(Error::invalid("surfaces with random angles need exactly one user")),
    }
}

pub fn run_landscape_export(scenario: &Scenario) -> Result<LandscapeReport> {
    scenario.validate()?;
    let truth = scenario.true_angle_for_landscape()?;
    let array = scenario.array;
    let optima = enumerate_global_optima(&array, truth)?;
    let scan = AngleGrid::from_degrees(-90.0, 90.0, scenario.landscape.scan_step_deg)?;
    let stationary = stationary_points(&array, truth, &scan)?;

    if scenario.landscape.surfaces.is_empty() {
        return Ok(LandscapeReport {
            optima,
            stationary,
            surfaces: Vec::new(),
        });
    }
    let surface_scenario = SurfaceScenario {
        array,
        true_aoas: surface_truth(scenario, truth)?,
        true_gains: CMat::from_element(scenario.users, 1, unpair(scenario.landscape.gain)),
        noise_variance: scenario.landscape.noise_variance,
    };
    let surfaces = scenario
        .landscape
        .surfaces
        .iter()
        .map(|spec| {
            let axes = spec.axes.iter().map(|a| a.to_axis()).collect::<Result<Vec<_>>>()?;
            Ok(NamedSurface {
                spec: spec.clone(),
                surface: evaluate_surface(&axes, &surface_scenario)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LandscapeReport {
        optima,
        stationary,
        surfaces,
    })
}

pub fn optima_csv(set: &GlobalOptimaSet) -> String {
    let mut out = format!("{OPTIMA_HEADER}\n");
    for (&a, &l) in set.alias_angles.iter().zip(&set.alias_integers) {
        out.push_str(&format!("{l},{},{}\n", fmt_f64(a.sin()), fmt_f64(a.to_degrees())));
    }
    out
}

pub fn stationary_csv(set: &StationaryPointSet) -> String {
    let mut out = format!("{STATIONARY_HEADER}\n");
    for (&a, &r) in set.angles.iter().zip(&set.residuals) {
        out.push_str(&format!("{},{}\n", fmt_f64(a.to_degrees()), fmt_f64(r)));
    }
    out
}

/// The header row holds the values of the last axis; each following row
/// starts with the coordinates of the leading axes. A one-axis surface
/// has a single row labelled `loss`.
pub fn surface_csv(named: &NamedSurface) -> String {
    let axes = &named.spec.axes;
    let last = axes.last().expect("surfaces have at least one axis");
    let leading = &axes[..axes.len() - 1];
    let mut head: Vec<String> = if leading.is_empty() {
        vec![last.label()]
    } else {
        leading.iter().map(|a| a.label()).collect()
    };
    head.extend(last.display_values().into_iter().map(fmt_f64));
    let mut out = head.join(",");
    out.push('\n');

    let row_len = last.points;
    let values = &named.surface.values;
    let leading_values: Vec<Vec<f64>> = leading.iter().map(|a| a.display_values()).collect();
    for (r, row) in values.chunks(row_len).enumerate() {
        let mut cells: Vec<String> = if leading.is_empty() {
            vec!["loss".into()]
        } else {
            let idx = named.surface.multi_index(r * row_len);
            leading_values.iter().zip(&idx).map(|(v, &i)| fmt_f64(v[i])).collect()
        };
        cells.extend(row.iter().map(|&v| fmt_f64(v)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn surface_file_name(spec: &SurfaceSpec) -> String {
    format!("surface_{}.csv", spec.name)
}
