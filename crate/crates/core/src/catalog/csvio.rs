use std::path::Path;

use super::{
    NutrientVector, Product, PurchaseRecord, ReferenceFood, UserProfile, AGE_RANGE,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntityKind {
    Products,
    Foods,
    Users,
    Purchases,
}

impl EntityKind {
    pub fn file_name(self) -> &'static str {
        match self {
            EntityKind::Products => "products.csv",
            EntityKind::Foods => "foods.csv",
            EntityKind::Users => "users.csv",
            EntityKind::Purchases => "purchases.csv",
        }
    }
}

/// A row type with a fixed CSV schema.
pub trait CsvRecord: Sized {
    const KIND: EntityKind;
    const HEADER: &'static [&'static str];

    /// `fields` are in `HEADER` order. Errors are plain messages; the loader
    /// attaches path and line.
    fn from_fields(fields: &[&str]) -> std::result::Result<Self, String>;

    fn to_fields(&self) -> Vec<String>;
}

fn num(name: &str, s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("{name}: cannot parse {s:?} as a number"))?;
    if !v.is_finite() {
        return Err(format!("{name}: {s:?} is not finite"));
    }
    Ok(v)
}

fn non_empty(name: &str, s: &str) -> std::result::Result<String, String> {
    if s.trim().is_empty() {
        Err(format!("{name} must not be empty"))
    } else {
        Ok(s.to_string())
    }
}

impl CsvRecord for Product {
    const KIND: EntityKind = EntityKind::Products;
    const HEADER: &'static [&'static str] = &["product_id", "name", "department"];

    fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        Ok(Product {
            id: non_empty("product_id", f[0])?,
            name: non_empty("name", f[1])?,
            department: f[2].to_string(),
        })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![self.id.clone(), self.name.clone(), self.department.clone()]
    }
}

impl CsvRecord for ReferenceFood {
    const KIND: EntityKind = EntityKind::Foods;
    const HEADER: &'static [&'static str] = &[
        "food_id",
        "description",
        "cal",
        "prot",
        "carb",
        "fat",
        "sugar",
        "sodium",
    ];

    fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        let mut values = [0.0; 6];
        for (i, v) in values.iter_mut().enumerate() {
            *v = num(Self::HEADER[i + 2], f[i + 2])?;
        }
        let nutrients = NutrientVector::from_array(values);
        if let Some(v) = nutrients.violations().into_iter().next() {
            return Err(v);
        }
        Ok(ReferenceFood {
            id: non_empty("food_id", f[0])?,
            description: non_empty("description", f[1])?,
            nutrients,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        let mut out = vec![self.id.clone(), self.description.clone()];
        out.extend(self.nutrients.to_array().iter().map(|v| v.to_string()));
        out
    }
}

impl CsvRecord for UserProfile {
    const KIND: EntityKind = EntityKind::Users;
    const HEADER: &'static [&'static str] = &[
        "user_id",
        "age",
        "sex",
        "weight_kg",
        "height_cm",
        "activity",
        "goal",
    ];

    fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        let age: i64 = f[1].trim().parse().map_err(|_| {
            format!(
                "age: cannot parse {:?} as an integer in [{}, {}]",
                f[1], AGE_RANGE.0, AGE_RANGE.1
            )
        })?;
        let user = UserProfile {
            id: non_empty("user_id", f[0])?,
            age,
            sex: f[2].parse()?,
            weight: num("weight_kg", f[3])?,
            height: num("height_cm", f[4])?,
            activity: f[5].parse()?,
            goal: f[6].parse()?,
        };
        if let Some((_, msg)) = user.violations().into_iter().next() {
            return Err(msg);
        }
        Ok(user)
    }

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.id.clone(),
            self.age.to_string(),
            self.sex.to_string(),
            self.weight.to_string(),
            self.height.to_string(),
            self.activity.to_string(),
            self.goal.to_string(),
        ]
    }
}

impl CsvRecord for PurchaseRecord {
    const KIND: EntityKind = EntityKind::Purchases;
    const HEADER: &'static [&'static str] = &["user_id", "product_id"];

    fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        Ok(PurchaseRecord {
            user_id: non_empty("user_id", f[0])?,
            product_id: non_empty("product_id", f[1])?,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![self.user_id.clone(), self.product_id.clone()]
    }
}

/// Reads one entity file. Columns are matched by header name, rows keep file
/// order, and every row is type- and bound-checked.
pub fn load_csv<T: CsvRecord>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(std::io::BufReader::new(file));

    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let mut columns = Vec::with_capacity(T::HEADER.len());
    let mut missing = Vec::new();
    for want in T::HEADER {
        match headers.iter().position(|h| h == *want) {
            Some(i) => columns.push(i),
            None => missing.push(want.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            missing,
        });
    }

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let mut fields = Vec::with_capacity(columns.len());
        for &c in &columns {
            fields.push(
                row.get(c)
                    .ok_or_else(|| parse_err(line, format!("missing column {c}")))?,
            );
        }
        out.push(T::from_fields(&fields).map_err(|m| parse_err(line, m))?);
    }
    Ok(out)
}

pub fn write_csv<T: CsvRecord>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(T::HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.to_fields()).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
