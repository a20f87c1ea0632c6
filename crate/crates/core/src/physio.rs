//! Personal energy and protein baselines (Mifflin–St Jeor resting rate,
//! activity ladder, goal adjustments) and the tolerance band around them.

use serde::{Deserialize, Serialize};

use crate::catalog::{Activity, Goal, Sex, UserProfile};

/// Tolerance fraction applied to both daily targets.
pub const DEFAULT_TOLERANCE: f64 = 0.12;

/// Coefficients of the baseline model. Defaults are the conventional
/// sports-nutrition values; every field is configurable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysioParams {
    /// sedentary, light, moderate, active, very_active
    pub activity_multipliers: [f64; 5],
    /// loss, maintenance, gain (kcal/day)
    pub goal_adjustments: [f64; 3],
    /// loss, maintenance, gain (g protein per kg body weight)
    pub protein_per_kg: [f64; 3],
    pub tolerance: f64,
}

impl Default for PhysioParams {
    fn default() -> Self {
        Self {
            activity_multipliers: [1.2, 1.375, 1.55, 1.725, 1.9],
            goal_adjustments: [-500.0, 0.0, 300.0],
            protein_per_kg: [1.2, 0.8, 1.6],
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysioTargets {
    pub rmr: f64,
    pub tdee: f64,
    pub protein_target: f64,
    pub eps_cal: f64,
    pub eps_prot: f64,
}

impl PhysioTargets {
    /// Closed-interval check of a bundle's totals against both bands.
    pub fn satisfied_by(&self, cal: f64, prot: f64) -> bool {
        (cal - self.tdee).abs() <= self.eps_cal && (prot - self.protein_target).abs() <= self.eps_prot
    }
}

fn activity_slot(a: Activity) -> usize {
    Activity::ALL.iter().position(|x| *x == a).unwrap()
}

fn goal_slot(g: Goal) -> usize {
    Goal::ALL.iter().position(|x| *x == g).unwrap()
}

/// Resting metabolic rate in kcal/day.
pub fn rmr(p: &UserProfile) -> f64 {
    let base = 10.0 * p.weight + 6.25 * p.height - 5.0 * p.age as f64;
    match p.sex {
        Sex::Male => base + 5.0,
        Sex::Female => base - 161.0,
    }
}

impl PhysioParams {
    pub fn tdee(&self, p: &UserProfile) -> f64 {
        rmr(p) * self.activity_multipliers[activity_slot(p.activity)]
            + self.goal_adjustments[goal_slot(p.goal)]
    }

    pub fn protein_target(&self, p: &UserProfile) -> f64 {
        p.weight * self.protein_per_kg[goal_slot(p.goal)]
    }

    pub fn targets(&self, p: &UserProfile) -> PhysioTargets {
        let tdee = self.tdee(p);
        let protein_target = self.protein_target(p);
        PhysioTargets {
            rmr: rmr(p),
            tdee,
            protein_target,
            eps_cal: self.tolerance * tdee,
            eps_prot: self.tolerance * protein_target,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

pub fn tdee(p: &UserProfile) -> f64 {
    PhysioParams::default().tdee(p)
}

pub fn protein_target(p: &UserProfile) -> f64 {
    PhysioParams::default().protein_target(p)
}

pub fn targets(p: &UserProfile) -> PhysioTargets {
    PhysioParams::default().targets(p)
}
