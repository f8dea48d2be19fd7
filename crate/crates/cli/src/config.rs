//! Flag and config-file handling. Every run can be specified as flags, a
//! JSON config file, or both; flags win. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use brint::dist::{site_from, Site};
use brint::{Error, Result};
use std::collections::BTreeMap;

pub struct Config {
    values: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Config {
    /// Parses `--key value` pairs; a `--config file.json` flag loads
    /// defaults from a flat JSON object first.
    pub fn from_args(args: &[String]) -> Result<Config> {
        let mut flags: BTreeMap<String, String> = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let a = &args[i];
            let key = a
                .strip_prefix("--")
                .ok_or_else(|| Error::config(format!("expected --flag, got '{a}'")))?;
            let val = args
                .get(i + 1)
                .ok_or_else(|| Error::config(format!("flag --{key} needs a value")))?;
            flags.insert(key.to_string(), val.clone());
            i += 2;
        }
        let mut values: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = flags.get("config") {
            let text = std::fs::read_to_string(path)?;
            let json: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("config file: {e}")))?;
            let obj = json
                .as_object()
                .ok_or_else(|| Error::config("config file must be a JSON object"))?;
            for (k, v) in obj {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                values.insert(k.clone(), s);
            }
        }
        values.extend(flags); // flags override the file
        Ok(Config {
            values,
            consumed: Default::default(),
        })
    }

    fn raw(&self, key: &str) -> Option<&String> {
        let v = self.values.get(key);
        if v.is_some() {
            self.consumed.borrow_mut().insert(key.to_string());
        }
        v
    }

    pub fn str_opt(&self, key: &str) -> Option<String> {
        self.raw(key).cloned()
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.raw(key).cloned().unwrap_or_else(|| default.to_string())
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("--{key}: '{v}' is not an integer"))),
        }
    }

    pub fn usize_req(&self, key: &str) -> Result<usize> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::config(format!("missing required --{key}")))?;
        v.parse()
            .map_err(|_| Error::config(format!("--{key}: '{v}' is not an integer")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("--{key}: '{v}' is not a number"))),
        }
    }

    pub fn f64_req(&self, key: &str) -> Result<f64> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::config(format!("missing required --{key}")))?;
        v.parse()
            .map_err(|_| Error::config(format!("--{key}: '{v}' is not a number")))
    }

    /// Site list: coordinates comma-separated, sites semicolon-separated.
    pub fn sites_req(&self, key: &str, d: usize) -> Result<Vec<Site>> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::config(format!("missing required --{key}")))?
            .clone();
        let mut out = Vec::new();
        for part in v.split(';') {
            let coords: Vec<i64> = part
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse()
                        .map_err(|_| Error::config(format!("--{key}: bad coordinate '{c}'")))
                })
                .collect::<Result<_>>()?;
            if coords.len() != d {
                return Err(Error::config(format!(
                    "--{key}: site '{part}' has {} coordinates, expected {d}",
                    coords.len()
                )));
            }
            out.push(site_from(&coords)?);
        }
        Ok(out)
    }

    /// Size expressions in N: numbers, the variables N, d, u, logNd,
    /// bcap0, with * / ^ and parentheses-free chains (e.g. `N^4`,
    /// `0.25*N^d`, `u*N^d*logNd/bcap0`).
    pub fn formula_req(&self, key: &str, vars: &Vars) -> Result<f64> {
        let v = self
            .raw(key)
            .ok_or_else(|| Error::config(format!("missing required --{key}")))?
            .clone();
        eval_formula(&v, vars).map_err(|e| Error::config(format!("--{key}: {e}")))
    }

    /// All key=value pairs as one canonical JSON object string. Execution
    /// details (worker count, output path) are excluded so the data file
    /// stays byte-identical across schedulers; the metadata record carries
    /// them.
    pub fn echo(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .filter(|(k, _)| k.as_str() != "workers" && k.as_str() != "out")
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        serde_json::Value::Object(map).to_string()
    }

    /// Errors on any key never consumed by the subcommand.
    pub fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        for k in self.values.keys() {
            if k != "config" && !consumed.contains(k) {
                return Err(Error::config(format!("unknown key '{k}'")));
            }
        }
        Ok(())
    }
}

/// Variables available to size formulas.
#[derive(Clone, Copy, Default)]
pub struct Vars {
    pub n_side: f64,
    pub d: f64,
    pub u: f64,
    pub bcap0: f64,
}

/// Evaluates `factor (('*'|'/') factor)*` with `factor = atom ('^' atom)?`
/// and atoms either numbers or named variables.
pub fn eval_formula(expr: &str, vars: &Vars) -> std::result::Result<f64, String> {
    let atom = |tok: &str| -> std::result::Result<f64, String> {
        let t = tok.trim();
        match t {
            "N" => Ok(vars.n_side),
            "d" => Ok(vars.d),
            "u" => Ok(vars.u),
            "logNd" => Ok((vars.n_side.powf(vars.d)).ln()),
            "Nd" => Ok(vars.n_side.powf(vars.d)),
            "bcap0" => {
                if vars.bcap0 > 0.0 {
                    Ok(vars.bcap0)
                } else {
                    Err("formula uses bcap0 but --bcap0 was not supplied".into())
                }
            }
            _ => t.parse().map_err(|_| format!("bad token '{t}'")),
        }
    };
    let factor = |tok: &str| -> std::result::Result<f64, String> {
        match tok.split_once('^') {
            Some((base, exp)) => Ok(atom(base)?.powf(atom(exp)?)),
            None => atom(tok),
        }
    };
    let mut value = 1.0f64;
    let mut rest = expr.trim();
    let mut op = '*';
    loop {
        let split = rest.find(['*', '/']);
        let (tok, next_op, tail) = match split {
            Some(i) => (&rest[..i], rest.as_bytes()[i] as char, &rest[i + 1..]),
            None => (rest, ' ', ""),
        };
        let f = factor(tok)?;
        match op {
            '*' => value *= f,
            '/' => {
                if f == 0.0 {
                    return Err("division by zero".into());
                }
                value /= f;
            }
            _ => unreachable!(),
        }
        if split.is_none() {
            return Ok(value);
        }
        op = next_op;
        rest = tail;
    }
}
