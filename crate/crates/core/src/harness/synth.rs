//! Seeded synthetic tables built from shipped value pools.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::tabular::{ColumnMeta, DeclaredType, TableData};

const VOCAB_TOML: &str = include_str!("../../data/synth_vocab.toml");
const SYNONYMS: &str = include_str!("../../data/column_synonyms.txt");

#[derive(Deserialize)]
struct Vocab {
    first_names: Vec<String>,
    last_names: Vec<String>,
    cities: Vec<String>,
    countries: Vec<String>,
    companies: Vec<String>,
    job_titles: Vec<String>,
    departments: Vec<String>,
    products: Vec<String>,
    colors: Vec<String>,
    streets: Vec<String>,
    email_domains: Vec<String>,
}

fn vocab() -> &'static Vocab {
    static V: OnceLock<Vocab> = OnceLock::new();
    V.get_or_init(|| toml::from_str(VOCAB_TOML).expect("shipped vocabulary parses"))
}

/// Column name → alternative names.
pub fn synonyms() -> &'static HashMap<String, Vec<String>> {
    static S: OnceLock<HashMap<String, Vec<String>>> = OnceLock::new();
    S.get_or_init(|| {
        SYNONYMS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let mut parts = l.split(',').map(|p| p.trim().to_string());
                let name = parts.next().expect("non-empty line");
                (name, parts.collect())
            })
            .collect()
    })
}

#[derive(Clone, Copy, Debug)]
enum Gen {
    Pick(fn(&Vocab) -> &Vec<String>),
    Street,
    Email,
    Phone,
    Int(i64, i64),
    Real(f64, f64, usize),
}

struct Template {
    name: &'static str,
    description: &'static str,
    gen: Gen,
}

const TEXT_COLUMNS: &[Template] = &[
    Template {
        name: "first_name",
        description: "given name of the person",
        gen: Gen::Pick(|v| &v.first_names),
    },
    Template {
        name: "last_name",
        description: "family name of the person",
        gen: Gen::Pick(|v| &v.last_names),
    },
    Template {
        name: "city",
        description: "city where the person lives",
        gen: Gen::Pick(|v| &v.cities),
    },
    Template {
        name: "country",
        description: "country of residence",
        gen: Gen::Pick(|v| &v.countries),
    },
    Template {
        name: "employer",
        description: "company the person works for",
        gen: Gen::Pick(|v| &v.companies),
    },
    Template {
        name: "job_title",
        description: "occupation of the person",
        gen: Gen::Pick(|v| &v.job_titles),
    },
    Template {
        name: "department",
        description: "organisational unit",
        gen: Gen::Pick(|v| &v.departments),
    },
    Template {
        name: "favourite_product",
        description: "most purchased product",
        gen: Gen::Pick(|v| &v.products),
    },
    Template {
        name: "color",
        description: "preferred colour",
        gen: Gen::Pick(|v| &v.colors),
    },
    Template {
        name: "street",
        description: "street address",
        gen: Gen::Street,
    },
    Template {
        name: "email",
        description: "contact email address",
        gen: Gen::Email,
    },
    Template {
        name: "phone",
        description: "contact telephone number",
        gen: Gen::Phone,
    },
];

const NUMERIC_COLUMNS: &[Template] = &[
    Template {
        name: "age",
        description: "age in years",
        gen: Gen::Int(18, 90),
    },
    Template {
        name: "salary",
        description: "yearly salary in dollars",
        gen: Gen::Real(20_000.0, 200_000.0, 2),
    },
    Template {
        name: "height_cm",
        description: "body height in centimetres",
        gen: Gen::Real(150.0, 200.0, 1),
    },
    Template {
        name: "weight_kg",
        description: "body weight in kilograms",
        gen: Gen::Real(45.0, 120.0, 1),
    },
    Template {
        name: "birth_year",
        description: "year of birth",
        gen: Gen::Int(1930, 2005),
    },
    Template {
        name: "rating",
        description: "customer satisfaction rating",
        gen: Gen::Real(1.0, 5.0, 1),
    },
    Template {
        name: "orders",
        description: "number of orders placed",
        gen: Gen::Int(0, 200),
    },
    Template {
        name: "balance",
        description: "account balance in dollars",
        gen: Gen::Real(-5_000.0, 50_000.0, 2),
    },
    Template {
        name: "latitude",
        description: "home latitude in degrees",
        gen: Gen::Real(-90.0, 90.0, 4),
    },
    Template {
        name: "longitude",
        description: "home longitude in degrees",
        gen: Gen::Real(-180.0, 180.0, 4),
    },
    Template {
        name: "score",
        description: "loyalty score out of one hundred",
        gen: Gen::Real(0.0, 100.0, 2),
    },
    Template {
        name: "discount",
        description: "discount rate granted",
        gen: Gen::Real(0.0, 0.5, 3),
    },
    Template {
        name: "tenure_years",
        description: "years with the current employer",
        gen: Gen::Int(0, 40),
    },
    Template {
        name: "zip_code",
        description: "postal code",
        gen: Gen::Int(10_000, 99_999),
    },
];

pub const MAX_TEXT_COLUMNS: usize = TEXT_COLUMNS.len();
pub const MAX_NUMERIC_COLUMNS: usize = NUMERIC_COLUMNS.len();

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub table_id: String,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Share of columns drawn from the numeric catalogue.
    pub numeric_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            table_id: "base".into(),
            n_rows: 500,
            n_cols: 20,
            numeric_fraction: 0.4,
            seed: 0,
        }
    }
}

fn draw(gen: Gen, rng: &mut ChaCha8Rng) -> String {
    let v = vocab();
    match gen {
        Gen::Pick(pool) => pool(v).choose(rng).expect("pool non-empty").clone(),
        Gen::Street => format!(
            "{} {}",
            rng.gen_range(1..2000),
            v.streets.choose(rng).expect("pool non-empty")
        ),
        Gen::Email => format!(
            "{}.{}{}@{}",
            v.first_names.choose(rng).expect("pool non-empty"),
            v.last_names.choose(rng).expect("pool non-empty"),
            rng.gen_range(1..100),
            v.email_domains.choose(rng).expect("pool non-empty")
        ),
        Gen::Phone => format!(
            "+{}-{:03}-{:04}",
            rng.gen_range(1..90),
            rng.gen_range(0..1000),
            rng.gen_range(0..10_000)
        ),
        Gen::Int(lo, hi) => rng.gen_range(lo..=hi).to_string(),
        Gen::Real(lo, hi, digits) => format!("{:.*}", digits, rng.gen_range(lo..hi)),
    }
}

/// Generates a table with `round(numeric_fraction · n_cols)` numeric columns.
/// Columns are sorted by name; values are drawn independently per cell.
pub fn synth_table(cfg: &SynthConfig) -> Result<TableData, HarnessError> {
    if !(0.0..=1.0).contains(&cfg.numeric_fraction) {
        return Err(HarnessError::InvalidConfig(format!(
            "numeric_fraction {} outside [0, 1]",
            cfg.numeric_fraction
        )));
    }
    let n_num = (cfg.numeric_fraction * cfg.n_cols as f64).round() as usize;
    let n_text = cfg.n_cols - n_num;
    if n_num > NUMERIC_COLUMNS.len() || n_text > TEXT_COLUMNS.len() {
        return Err(HarnessError::InvalidConfig(format!(
            "catalogue holds {} text and {} numeric columns; asked for {n_text} and {n_num}",
            TEXT_COLUMNS.len(),
            NUMERIC_COLUMNS.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut text: Vec<&Template> = TEXT_COLUMNS.iter().collect();
    let mut num: Vec<&Template> = NUMERIC_COLUMNS.iter().collect();
    text.shuffle(&mut rng);
    num.shuffle(&mut rng);
    let mut chosen: Vec<&Template> = text[..n_text]
        .iter()
        .chain(&num[..n_num])
        .copied()
        .collect();
    chosen.sort_by_key(|s| s.name);

    let columns = chosen
        .iter()
        .map(|s| {
            let mut meta = ColumnMeta::new(s.name).with_description(s.description);
            meta.declared_type = match s.gen {
                Gen::Int(..) | Gen::Real(..) => DeclaredType::Numeric,
                _ => DeclaredType::Text,
            };
            meta
        })
        .collect();
    let rows = (0..cfg.n_rows)
        .map(|_| chosen.iter().map(|s| Some(draw(s.gen, &mut rng))).collect())
        .collect();
    Ok(TableData::new(cfg.table_id.clone(), columns, rows)?)
}

/// Picks a synonym for `name`, or abbreviates it by dropping inner vowels.
pub fn noisy_name(name: &str, rng: &mut ChaCha8Rng) -> String {
    if let Some(alts) = synonyms().get(name).filter(|a| !a.is_empty()) {
        return alts.choose(rng).expect("non-empty").clone();
    }
    name.split('_')
        .map(|part| {
            let mut chars = part.chars();
            let first: String = chars.next().into_iter().collect();
            first + &chars.filter(|c| !"aeiou".contains(*c)).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("_")
}
