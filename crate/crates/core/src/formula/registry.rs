use std::collections::BTreeMap;
use std::sync::OnceLock;

use super::eval::EvalError;

/// A library function usable in check expressions.
#[derive(Clone)]
pub struct FunctionSpec {
    pub name: String,
    pub min_args: usize,
    pub max_args: Option<usize>,
    pub eval: fn(&[f64]) -> Result<f64, EvalError>,
}

impl std::fmt::Debug for FunctionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionSpec")
            .field("name", &self.name)
            .field("min_args", &self.min_args)
            .field("max_args", &self.max_args)
            .finish()
    }
}

impl FunctionSpec {
    pub fn accepts(&self, n: usize) -> bool {
        n >= self.min_args && self.max_args.map_or(true, |m| n <= m)
    }
}

/// Function library keyed by upper-case name.
#[derive(Debug, Clone)]
pub struct Registry {
    functions: BTreeMap<String, FunctionSpec>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry { functions: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &str, min_args: usize, max_args: Option<usize>, eval: fn(&[f64]) -> Result<f64, EvalError>) {
        let name = name.to_ascii_uppercase();
        self.functions.insert(name.clone(), FunctionSpec { name, min_args, max_args, eval });
    }

    pub fn get(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.get(&name.to_ascii_uppercase())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.functions.keys().map(String::as_str)
    }

    /// The shared default library.
    pub fn standard() -> &'static Registry {
        static STANDARD: OnceLock<Registry> = OnceLock::new();
        STANDARD.get_or_init(Registry::default)
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::empty();
        r.register("POWER", 2, Some(2), |a| Ok(a[0].powf(a[1])));
        r.register("SUM", 1, None, |a| Ok(a.iter().sum()));
        r.register("AVG", 1, None, |a| Ok(a.iter().sum::<f64>() / a.len() as f64));
        r.register("MIN", 1, None, |a| Ok(a.iter().copied().fold(f64::INFINITY, f64::min)));
        r.register("MAX", 1, None, |a| Ok(a.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
        r.register("ABS", 1, Some(1), |a| Ok(a[0].abs()));
        r.register("SQRT", 1, Some(1), |a| {
            if a[0] < 0.0 {
                Err(EvalError::Domain("SQRT of a negative value".into()))
            } else {
                Ok(a[0].sqrt())
            }
        });
        r.register("LN", 1, Some(1), |a| {
            if a[0] <= 0.0 {
                Err(EvalError::Domain("LN of a non-positive value".into()))
            } else {
                Ok(a[0].ln())
            }
        });
        r.register("EXP", 1, Some(1), |a| Ok(a[0].exp()));
        r.register("ROUND", 1, Some(2), |a| {
            let digits = a.get(1).copied().unwrap_or(0.0).round() as i32;
            let scale = 10f64.powi(digits);
            Ok((a[0] * scale).round() / scale)
        });
        r
    }
}
