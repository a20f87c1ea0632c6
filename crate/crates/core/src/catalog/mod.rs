//! Products, reference foods, user profiles and purchases.
//!
//! Everything downstream works on positional indices into a [`Dataset`];
//! ids only matter at the file boundary.

mod csvio;
mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csvio::{load_csv, write_csv, CsvRecord, EntityKind};
pub use synthetic::{generate_synthetic, SyntheticParams};

pub const AGE_RANGE: (i64, i64) = (13, 100);
pub const WEIGHT_RANGE: (f64, f64) = (30.0, 250.0);
pub const HEIGHT_RANGE: (f64, f64) = (120.0, 230.0);

/// Per-serving nutrient record. Sodium is in milligrams, calories in kcal,
/// everything else in grams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NutrientVector {
    pub cal: f64,
    pub prot: f64,
    pub carb: f64,
    pub fat: f64,
    pub sugar: f64,
    pub sodium: f64,
}

impl NutrientVector {
    pub const LEN: usize = 6;
    pub const NAMES: [&'static str; 6] = ["cal", "prot", "carb", "fat", "sugar", "sodium"];

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            cal: a[0],
            prot: a[1],
            carb: a[2],
            fat: a[3],
            sugar: a[4],
            sodium: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.cal, self.prot, self.carb, self.fat, self.sugar, self.sodium]
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * k))
    }

    pub fn add(self, other: Self) -> Self {
        let (a, b) = (self.to_array(), other.to_array());
        Self::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }

    /// Protein grams per 100 kcal; zero-calorie records rank last.
    pub fn protein_density(&self) -> f64 {
        if self.cal > 0.0 {
            100.0 * self.prot / self.cal
        } else {
            0.0
        }
    }

    pub fn violations(&self) -> Vec<String> {
        self.to_array()
            .iter()
            .zip(Self::NAMES)
            .filter(|(v, _)| !v.is_finite() || **v < 0.0)
            .map(|(v, n)| format!("{n} = {v} must be finite and >= 0"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub name: String,
    pub department: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFood {
    pub id: String,
    pub description: String,
    pub nutrients: NutrientVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Sedentary,
    Light,
    Moderate,
    Active,
    VeryActive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Loss,
    Maintenance,
    Gain,
}

impl Activity {
    pub const ALL: [Activity; 5] = [
        Activity::Sedentary,
        Activity::Light,
        Activity::Moderate,
        Activity::Active,
        Activity::VeryActive,
    ];
}

impl Goal {
    pub const ALL: [Goal; 3] = [Goal::Loss, Goal::Maintenance, Goal::Gain];
}

macro_rules! str_enum {
    ($ty:ty { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $(Self::$variant => $s),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s => Ok(Self::$variant),)+
                    other => Err(format!(
                        "unknown {} {other:?} (expected one of {})",
                        stringify!($ty).to_ascii_lowercase(),
                        [$($s),+].join(", ")
                    )),
                }
            }
        }
    };
}

str_enum!(Sex { Male => "male", Female => "female" });
str_enum!(Activity {
    Sedentary => "sedentary",
    Light => "light",
    Moderate => "moderate",
    Active => "active",
    VeryActive => "very_active",
});
str_enum!(Goal { Loss => "loss", Maintenance => "maintenance", Gain => "gain" });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    #[serde(default)]
    pub id: String,
    pub age: i64,
    pub sex: Sex,
    pub weight: f64,
    pub height: f64,
    pub activity: Activity,
    pub goal: Goal,
}

impl UserProfile {
    /// Bound violations, one message per offending field.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let (lo, hi) = AGE_RANGE;
        if !(lo..=hi).contains(&self.age) {
            out.push(("age", format!("age {} outside [{lo}, {hi}]", self.age)));
        }
        let (lo, hi) = WEIGHT_RANGE;
        if !(self.weight.is_finite() && self.weight >= lo && self.weight <= hi) {
            out.push(("weight", format!("weight {} outside [{lo}, {hi}] kg", self.weight)));
        }
        let (lo, hi) = HEIGHT_RANGE;
        if !(self.height.is_finite() && self.height >= lo && self.height <= hi) {
            out.push(("height", format!("height {} outside [{lo}, {hi}] cm", self.height)));
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((_, msg)) => Err(Error::InvalidArgument(msg)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PurchaseRecord {
    pub user_id: String,
    pub product_id: String,
}

/// An immutable catalog snapshot with id lookups.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub products: Vec<Product>,
    pub foods: Vec<ReferenceFood>,
    pub users: Vec<UserProfile>,
    pub purchases: Vec<PurchaseRecord>,
    /// Generator-known product → food index; absent for loaded data.
    pub ground_truth: Option<Vec<usize>>,
    product_index: HashMap<String, usize>,
    food_index: HashMap<String, usize>,
    user_index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(
        products: Vec<Product>,
        foods: Vec<ReferenceFood>,
        users: Vec<UserProfile>,
        purchases: Vec<PurchaseRecord>,
    ) -> Self {
        fn index<T>(items: &[T], id: impl Fn(&T) -> &str) -> HashMap<String, usize> {
            let mut map = HashMap::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                map.entry(id(item).to_string()).or_insert(i);
            }
            map
        }
        Self {
            product_index: index(&products, |p| &p.id),
            food_index: index(&foods, |f| &f.id),
            user_index: index(&users, |u| &u.id),
            products,
            foods,
            users,
            purchases,
            ground_truth: None,
        }
    }

    pub fn product_idx(&self, id: &str) -> Option<usize> {
        self.product_index.get(id).copied()
    }

    pub fn food_idx(&self, id: &str) -> Option<usize> {
        self.food_index.get(id).copied()
    }

    pub fn user_idx(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    /// Purchases as (user, product) index pairs, in file order.
    pub fn interactions(&self) -> Result<Vec<(usize, usize)>> {
        self.purchases
            .iter()
            .map(|r| {
                let u = self
                    .user_idx(&r.user_id)
                    .ok_or_else(|| Error::Dangling(format!("user {}", r.user_id)))?;
                let p = self
                    .product_idx(&r.product_id)
                    .ok_or_else(|| Error::Dangling(format!("product {}", r.product_id)))?;
                Ok((u, p))
            })
            .collect()
    }

    /// Sorted purchased-product lists per user.
    pub fn user_items(&self) -> Result<Vec<Vec<usize>>> {
        let mut items = vec![Vec::new(); self.users.len()];
        for (u, p) in self.interactions()? {
            items[u].push(p);
        }
        for list in &mut items {
            list.sort_unstable();
            list.dedup();
        }
        Ok(items)
    }

    /// Copy of this dataset restricted to the given purchases.
    pub fn with_purchases(&self, purchases: Vec<PurchaseRecord>) -> Self {
        let mut out = Self::new(
            self.products.clone(),
            self.foods.clone(),
            self.users.clone(),
            purchases,
        );
        out.ground_truth = self.ground_truth.clone();
        out
    }

    pub fn load_dir(dir: &std::path::Path) -> Result<Self> {
        Ok(Self::new(
            load_csv(&dir.join(EntityKind::Products.file_name()))?,
            load_csv(&dir.join(EntityKind::Foods.file_name()))?,
            load_csv(&dir.join(EntityKind::Users.file_name()))?,
            load_csv(&dir.join(EntityKind::Purchases.file_name()))?,
        ))
    }

    pub fn write_dir(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join(EntityKind::Products.file_name()), &self.products)?;
        write_csv(&dir.join(EntityKind::Foods.file_name()), &self.foods)?;
        write_csv(&dir.join(EntityKind::Users.file_name()), &self.users)?;
        write_csv(&dir.join(EntityKind::Purchases.file_name()), &self.purchases)?;
        Ok(())
    }
}

/// Checks every type invariant plus referential integrity. Never fails;
/// an empty list means the dataset is sound.
pub fn validate(ds: &Dataset) -> Vec<String> {
    let mut out = Vec::new();

    fn duplicates<'a>(kind: &str, ids: impl Iterator<Item = &'a str>, out: &mut Vec<String>) {
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id) {
                out.push(format!("duplicate {kind} id {id:?}"));
            }
        }
    }

    duplicates("product", ds.products.iter().map(|p| p.id.as_str()), &mut out);
    duplicates("food", ds.foods.iter().map(|f| f.id.as_str()), &mut out);
    duplicates("user", ds.users.iter().map(|u| u.id.as_str()), &mut out);

    for p in &ds.products {
        if p.name.trim().is_empty() {
            out.push(format!("product {:?} has an empty name", p.id));
        }
    }
    for f in &ds.foods {
        if f.description.trim().is_empty() {
            out.push(format!("food {:?} has an empty description", f.id));
        }
        for v in f.nutrients.violations() {
            out.push(format!("food {:?}: {v}", f.id));
        }
    }
    for u in &ds.users {
        for (_, v) in u.violations() {
            out.push(format!("user {:?}: {v}", u.id));
        }
    }

    let mut pairs = HashSet::new();
    for r in &ds.purchases {
        if ds.user_idx(&r.user_id).is_none() {
            out.push(format!("purchase references unknown user {:?}", r.user_id));
        }
        if ds.product_idx(&r.product_id).is_none() {
            out.push(format!("purchase references unknown product {:?}", r.product_id));
        }
        if !pairs.insert((r.user_id.as_str(), r.product_id.as_str())) {
            out.push(format!(
                "duplicate purchase ({:?}, {:?})",
                r.user_id, r.product_id
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(
            vec![Product {
                id: "p1".into(),
                name: "Oats".into(),
                department: "pantry".into(),
            }],
            vec![ReferenceFood {
                id: "f1".into(),
                description: "oats, rolled".into(),
                nutrients: NutrientVector::from_array([150.0, 5.0, 27.0, 3.0, 1.0, 0.0]),
            }],
            vec![UserProfile {
                id: "u1".into(),
                age: 34,
                sex: Sex::Male,
                weight: 82.0,
                height: 181.0,
                activity: Activity::Moderate,
                goal: Goal::Gain,
            }],
            vec![PurchaseRecord {
                user_id: "u1".into(),
                product_id: "p1".into(),
            }],
        )
    }

    #[test]
    fn sound_dataset_has_no_violations() {
        assert!(validate(&tiny()).is_empty());
    }

    #[test]
    fn unknown_product_reported_once() {
        let mut ds = tiny();
        ds.purchases.push(PurchaseRecord {
            user_id: "u1".into(),
            product_id: "p404".into(),
        });
        let v = validate(&ds);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("p404"));
    }

    #[test]
    fn duplicate_purchase_reported_once() {
        let mut ds = tiny();
        ds.purchases.push(ds.purchases[0].clone());
        let v = validate(&ds);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("duplicate purchase"));
    }

    #[test]
    fn profile_bounds() {
        let mut u = tiny().users[0].clone();
        assert!(u.violations().is_empty());
        u.age = 5;
        u.height = 300.0;
        let v = u.violations();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].0, "age");
        assert!(v[0].1.contains("[13, 100]"));
    }

    #[test]
    fn enum_parsing() {
        assert_eq!("VERY_ACTIVE".parse::<Activity>().unwrap(), Activity::VeryActive);
        assert!("couch".parse::<Activity>().is_err());
        assert_eq!(Goal::Maintenance.to_string(), "maintenance");
    }

    #[test]
    fn nutrient_arithmetic() {
        let n = NutrientVector::from_array([100.0, 10.0, 5.0, 2.0, 1.0, 50.0]);
        assert_eq!(n.scaled(2.0).add(n).cal, 300.0);
        assert_eq!(n.protein_density(), 10.0);
        assert!(NutrientVector::from_array([-1.0, 0.0, 0.0, 0.0, 0.0, f64::NAN])
            .violations()
            .len()
            == 2);
    }
}
