//! Deterministic synthetic catalog with known product → food ground truth.
//!
//! Foods come from seven nutrient archetypes. Each product name is a noisy
//! paraphrase of exactly one food description ("brand + description
//! fragment + qualifier"), and purchases follow per-user archetype
//! preferences.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Activity, Dataset, Goal, NutrientVector, Product, PurchaseRecord, ReferenceFood, Sex,
    UserProfile,
};
use crate::error::{Error, Result};
use crate::physio::PhysioParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticParams {
    pub seed: u64,
    pub n_products: usize,
    pub n_foods: usize,
    pub n_users: usize,
    pub purchases_per_user: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 7,
            n_products: 500,
            n_foods: 100,
            n_users: 200,
            purchases_per_user: 20,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Archetype {
    LeanProtein,
    Starch,
    FatDense,
    Sugary,
    Mixed,
    Produce,
    Dairy,
}

const ARCHETYPES: [Archetype; 7] = [
    Archetype::LeanProtein,
    Archetype::Starch,
    Archetype::FatDense,
    Archetype::Sugary,
    Archetype::Mixed,
    Archetype::Produce,
    Archetype::Dairy,
];

struct ArchetypeSpec {
    department: &'static str,
    bases: &'static [&'static str],
    modifiers: &'static [&'static str],
    // (lo, hi) grams per serving
    prot: (f64, f64),
    carb: (f64, f64),
    fat: (f64, f64),
    sugar_share: (f64, f64),
    sodium: (f64, f64),
}

impl Archetype {
    /// Shelf pull of palatable, energy-dense goods.
    fn popularity(self) -> f64 {
        match self {
            Archetype::Sugary | Archetype::FatDense => POPULARITY_BOOST,
            _ => 1.0,
        }
    }

    fn spec(self) -> ArchetypeSpec {
        match self {
            Archetype::LeanProtein => ArchetypeSpec {
                department: "meat seafood",
                bases: &[
                    "chicken breast", "turkey breast", "cod fillet", "tuna steak",
                    "egg whites", "firm tofu", "shrimp", "tilapia", "lean ground beef",
                    "pork tenderloin", "salmon fillet", "tempeh", "seitan", "bison steak",
                    "scallops", "halibut",
                ],
                modifiers: &["raw", "roasted", "grilled", "baked", "smoked", "poached"],
                prot: (18.0, 28.0),
                carb: (0.0, 3.0),
                fat: (1.0, 6.0),
                sugar_share: (0.0, 0.3),
                sodium: (40.0, 380.0),
            },
            Archetype::Starch => ArchetypeSpec {
                department: "bakery pantry",
                bases: &[
                    "white rice", "brown rice", "rolled oats", "wheat bread",
                    "spaghetti pasta", "russet potato", "sweet potato", "quinoa",
                    "couscous", "corn tortilla", "plain bagel", "pearl barley",
                    "buckwheat groats", "rye crackers", "basmati rice", "egg noodles",
                ],
                modifiers: &["cooked", "dry", "enriched", "whole grain", "boiled", "toasted"],
                prot: (3.0, 7.0),
                carb: (26.0, 42.0),
                fat: (0.5, 4.0),
                sugar_share: (0.0, 0.1),
                sodium: (0.0, 320.0),
            },
            Archetype::FatDense => ArchetypeSpec {
                department: "nuts oils",
                bases: &[
                    "almonds", "walnuts", "peanut butter", "olive oil", "avocado",
                    "cashews", "cheddar cheese", "salted butter", "pecans",
                    "macadamia nuts", "sunflower seeds", "coconut flakes", "pistachios",
                    "hazelnuts", "sesame tahini", "cream cheese",
                ],
                modifiers: &["roasted", "salted", "unsalted", "raw", "blanched", "spread"],
                prot: (2.0, 7.0),
                carb: (2.0, 8.0),
                fat: (14.0, 22.0),
                sugar_share: (0.0, 0.4),
                sodium: (0.0, 250.0),
            },
            Archetype::Sugary => ArchetypeSpec {
                department: "snacks sweets",
                bases: &[
                    "chocolate cake", "gummy candy", "cola soda", "glazed donut",
                    "vanilla ice cream", "pancake syrup", "sugar cookies", "fruit punch",
                    "clover honey", "caramel popcorn", "jelly beans", "apple pie",
                    "fudge brownie", "lemonade", "marshmallows", "butter toffee",
                ],
                modifiers: &["regular", "frosted", "mini", "classic", "double", "iced"],
                prot: (0.0, 3.0),
                carb: (24.0, 45.0),
                fat: (0.0, 8.0),
                sugar_share: (0.6, 0.95),
                sodium: (5.0, 200.0),
            },
            Archetype::Mixed => ArchetypeSpec {
                department: "frozen meals",
                bases: &[
                    "beef lasagna", "chicken burrito", "pepperoni pizza", "bean chili",
                    "chicken curry", "turkey sandwich", "beef stew", "vegetable fried rice",
                    "pad thai", "shepherds pie", "mac and cheese", "chicken pot pie",
                    "cheese enchiladas", "meatball sub", "ramen bowl", "falafel wrap",
                ],
                modifiers: &["frozen", "prepared", "restaurant style", "homestyle", "microwave", "deli"],
                prot: (10.0, 18.0),
                carb: (18.0, 32.0),
                fat: (6.0, 12.0),
                sugar_share: (0.05, 0.25),
                sodium: (400.0, 950.0),
            },
            Archetype::Produce => ArchetypeSpec {
                department: "produce",
                bases: &[
                    "broccoli florets", "spinach leaves", "carrots", "gala apple", "banana",
                    "strawberries", "kale", "roma tomato", "cucumber", "bell pepper",
                    "blueberries", "zucchini", "cauliflower", "green beans",
                    "navel orange", "romaine lettuce",
                ],
                modifiers: &["fresh", "frozen", "steamed", "chopped", "baby", "whole"],
                prot: (0.5, 3.0),
                carb: (4.0, 18.0),
                fat: (0.0, 0.8),
                sugar_share: (0.2, 0.7),
                sodium: (0.0, 60.0),
            },
            Archetype::Dairy => ArchetypeSpec {
                department: "dairy eggs",
                bases: &[
                    "greek yogurt", "skim milk", "cottage cheese", "kefir",
                    "mozzarella", "ricotta", "whole milk", "string cheese", "soy milk",
                    "icelandic skyr", "buttermilk", "swiss cheese", "hard boiled eggs",
                    "quark", "goat milk", "paneer",
                ],
                modifiers: &["plain", "low fat", "nonfat", "vanilla", "reduced fat", "part skim"],
                prot: (7.0, 14.0),
                carb: (5.0, 13.0),
                fat: (2.0, 8.0),
                sugar_share: (0.3, 0.9),
                sodium: (40.0, 320.0),
            },
        }
    }
}

const BRANDS: &[&str] = &[
    "Acme", "Harvestly", "Sunvale", "Goldcrest", "Evergrove", "Bluebird", "Northstar",
    "Kindred", "Pantrix", "Farmhaus", "Brightway", "Oakmont",
];

const QUALIFIERS: &[&str] = &[
    "value pack", "16 oz", "twin pack", "bulk", "premium", "store brand", "single serve",
    "xl", "family size", "select",
];

const POPULARITY_BOOST: f64 = 2.0;

/// Preference weights over [`ARCHETYPES`] for each shopper type.
const USER_ARCHETYPES: [[f64; 7]; 5] = [
    // athlete
    [0.28, 0.22, 0.10, 0.05, 0.14, 0.08, 0.13],
    // dieter
    [0.18, 0.20, 0.10, 0.07, 0.06, 0.26, 0.13],
    // comfort
    [0.06, 0.16, 0.15, 0.28, 0.28, 0.04, 0.03],
    // balanced
    [0.15, 0.15, 0.14, 0.13, 0.14, 0.15, 0.14],
    // snacker
    [0.04, 0.20, 0.28, 0.33, 0.07, 0.05, 0.03],
];

/// Daily energy band the synthetic cohort is drawn from, in kcal.
pub const COHORT_TDEE_BAND: (f64, f64) = (1900.0, 3400.0);

/// Lowest protein share of daily energy (4 kcal/g) a synthetic profile may
/// have: the lower edge of the adult acceptable macronutrient range. Below
/// it only fat and sugar can fill the calorie gap.
pub const MIN_PROTEIN_ENERGY_SHARE: f64 = 0.10;

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn sample_food(rng: &mut ChaCha8Rng, arch: Archetype, j: usize) -> (String, NutrientVector) {
    let spec = arch.spec();
    let (nb, nm) = (spec.bases.len(), spec.modifiers.len());
    let base = spec.bases[j % nb];
    let modifier = spec.modifiers[(j / nb + j) % nm];
    let mut description = format!("{base}, {modifier}");
    if j >= nb * nm {
        description.push_str(&format!(" style {}", j / (nb * nm)));
    }

    let mut draw = |(lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let prot = round1(draw(spec.prot));
    let carb = round1(draw(spec.carb));
    let fat = round1(draw(spec.fat));
    let sugar = round1(carb * draw(spec.sugar_share));
    let sodium = draw(spec.sodium).round();
    let cal = round1(4.0 * prot + 4.0 * carb + 9.0 * fat);
    (
        description,
        NutrientVector {
            cal,
            prot,
            carb,
            fat,
            sugar,
            sodium,
        },
    )
}

fn paraphrase(rng: &mut ChaCha8Rng, description: &str) -> String {
    let brand = BRANDS[rng.gen_range(0..BRANDS.len())];
    let qualifier = QUALIFIERS[rng.gen_range(0..QUALIFIERS.len())];
    let fragment = match description.split_once(", ") {
        Some((base, modifier)) if rng.gen_bool(0.5) => format!("{modifier} {base}"),
        Some((base, modifier)) => format!("{base} {modifier}"),
        None => description.to_string(),
    };
    let fragment = if rng.gen_bool(0.5) {
        title_case(&fragment)
    } else {
        fragment
    };
    format!("{brand} {fragment} {qualifier}")
}

fn sample_profile(rng: &mut ChaCha8Rng, id: String, physio: &PhysioParams) -> UserProfile {
    loop {
        let sex = if rng.gen_bool(0.5) { Sex::Male } else { Sex::Female };
        let height: f64 = match sex {
            Sex::Male => rng.gen_range(165.0..195.0),
            Sex::Female => rng.gen_range(152.0..182.0),
        };
        let bmi: f64 = rng.gen_range(19.0..30.0);
        let profile = UserProfile {
            id: id.clone(),
            age: rng.gen_range(18..=65),
            sex,
            weight: round1(bmi * (height / 100.0).powi(2)),
            height: height.round(),
            activity: Activity::ALL[rng.gen_range(0..Activity::ALL.len())],
            goal: Goal::ALL[rng.gen_range(0..Goal::ALL.len())],
        };
        let tdee = physio.tdee(&profile);
        let protein_share = 4.0 * physio.protein_target(&profile) / tdee;
        if (COHORT_TDEE_BAND.0..=COHORT_TDEE_BAND.1).contains(&tdee)
            && protein_share >= MIN_PROTEIN_ENERGY_SHARE
        {
            return profile;
        }
    }
}

/// Builds a reproducible dataset. Identical parameters give identical output
/// on every platform (ChaCha8 stream, no hash-map iteration).
pub fn generate_synthetic(params: SyntheticParams) -> Result<Dataset> {
    let SyntheticParams {
        seed,
        n_products,
        n_foods,
        n_users,
        purchases_per_user,
    } = params;
    if n_products == 0 || n_users == 0 || purchases_per_user == 0 {
        return Err(Error::InvalidArgument("all counts must be >= 1".into()));
    }
    if n_foods < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 foods, got {n_foods}"
        )));
    }
    if purchases_per_user > n_products {
        return Err(Error::InvalidArgument(format!(
            "purchases_per_user {purchases_per_user} exceeds catalog size {n_products}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut food_arch = Vec::with_capacity(n_foods);
    let mut foods = Vec::with_capacity(n_foods);
    for i in 0..n_foods {
        let arch = ARCHETYPES[i % ARCHETYPES.len()];
        let (description, nutrients) = sample_food(&mut rng, arch, i / ARCHETYPES.len());
        food_arch.push(arch);
        foods.push(ReferenceFood {
            id: format!("f{}", i + 1),
            description,
            nutrients,
        });
    }

    let mut truth: Vec<usize> = (0..n_products)
        .map(|i| {
            if i < n_foods {
                i
            } else {
                rng.gen_range(0..n_foods)
            }
        })
        .collect();
    truth.shuffle(&mut rng);
    let products: Vec<Product> = truth
        .iter()
        .enumerate()
        .map(|(i, &f)| Product {
            id: format!("p{}", i + 1),
            name: paraphrase(&mut rng, &foods[f].description),
            department: food_arch[f].spec().department.to_string(),
        })
        .collect();
    let popularity: Vec<f64> = truth
        .iter()
        .map(|&f| rng.gen_range(0.3..1.7) * food_arch[f].popularity())
        .collect();

    let physio = PhysioParams::default();
    let mut users = Vec::with_capacity(n_users);
    let mut purchases = Vec::with_capacity(n_users * purchases_per_user);
    for u in 0..n_users {
        let id = format!("u{}", u + 1);
        let prefs = &USER_ARCHETYPES[rng.gen_range(0..USER_ARCHETYPES.len())];
        users.push(sample_profile(&mut rng, id.clone(), &physio));

        // Weighted sampling without replacement (exponential keys).
        let mut keyed: Vec<(f64, usize)> = (0..n_products)
            .map(|p| {
                let arch = ARCHETYPES
                    .iter()
                    .position(|a| *a == food_arch[truth[p]])
                    .unwrap();
                let w = prefs[arch] * popularity[p];
                let r: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                (-r.ln() / w, p)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = keyed[..purchases_per_user].iter().map(|k| k.1).collect();
        chosen.sort_unstable();
        purchases.extend(chosen.into_iter().map(|p| PurchaseRecord {
            user_id: id.clone(),
            product_id: products[p].id.clone(),
        }));
    }

    let mut ds = Dataset::new(products, foods, users, purchases);
    ds.ground_truth = Some(truth);
    Ok(ds)
}
