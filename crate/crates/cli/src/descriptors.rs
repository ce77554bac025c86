//! Compact, shell-friendly descriptors for numbers, CD-functions, growth
//! functions and time grids.
//!
//! ```text
//! number   1.5 | sqrt(3) | pi
//! cdfun    zero | power:n=12,delta=1 | nu:2,5,scale=3,out=1.5 | table:0.5=0.1,1=0.4
//! growth   log:n=12,kappa=sqrt(3) | power:n=4,kappa=2,delta=2 | linear:c=0.5
//! grid     geom:1e-3,1.5,30[,zero] | lin:0,2,21 | 0,0.1,1
//! ```

use curvcheck::inequalities::GrowthFunction;
use curvcheck::semigroup::geometric_grid;
use curvcheck::{CdFunction, Error, Result};

fn bad(text: &str) -> Error {
    Error::InvalidDescriptor(text.to_string())
}

pub fn parse_number(text: &str) -> Result<f64> {
    let t = text.trim();
    let v = if t == "pi" {
        std::f64::consts::PI
    } else if let Some(inner) = t.strip_prefix("sqrt(").and_then(|s| s.strip_suffix(')')) {
        parse_number(inner)?.sqrt()
    } else {
        t.parse::<f64>().map_err(|_| bad(text))?
    };
    if v.is_nan() {
        return Err(bad(text));
    }
    Ok(v)
}

/// Splits `kind:a,b,k=v` into the kind, positional values and keyed values.
/// Commas inside parentheses do not split.
fn split(text: &str) -> (String, Vec<String>, Vec<(String, String)>) {
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let mut parts = Vec::new();
    let (mut depth, mut cur) = (0i32, String::new());
    for ch in rest.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.is_empty() || !parts.is_empty() {
        parts.push(cur);
    }
    let mut pos = Vec::new();
    let mut keyed = Vec::new();
    for p in parts {
        match p.split_once('=') {
            Some((k, v)) => keyed.push((k.trim().to_string(), v.trim().to_string())),
            None => pos.push(p.trim().to_string()),
        }
    }
    (kind.trim().to_string(), pos, keyed)
}

struct Keyed<'a> {
    text: &'a str,
    pairs: Vec<(String, String)>,
}

impl Keyed<'_> {
    fn take(&mut self, key: &str) -> Result<Option<f64>> {
        match self.pairs.iter().position(|(k, _)| k == key) {
            Some(i) => parse_number(&self.pairs.remove(i).1).map(Some),
            None => Ok(None),
        }
    }

    fn require(&mut self, key: &str) -> Result<f64> {
        self.take(key)?.ok_or_else(|| bad(self.text))
    }

    fn finish(self) -> Result<()> {
        if self.pairs.is_empty() {
            Ok(())
        } else {
            Err(bad(self.text))
        }
    }
}

pub fn parse_cdfun(text: &str) -> Result<CdFunction> {
    let (kind, pos, pairs) = split(text);
    let mut kv = Keyed { text, pairs };
    let f = match kind.as_str() {
        "zero" if pos.is_empty() => CdFunction::Zero,
        "power" if pos.is_empty() => CdFunction::Power {
            n: kv.require("n")?,
            delta: kv.take("delta")?.unwrap_or(1.0),
        },
        "nu" => {
            let (c, d) = match pos.as_slice() {
                [c, d] => (parse_number(c)?, parse_number(d)?),
                [] => (kv.require("c")?, kv.require("d")?),
                _ => return Err(bad(text)),
            };
            CdFunction::Nu {
                out_scale: kv.take("out")?.unwrap_or(1.0),
                c,
                d,
                arg_scale: kv.take("scale")?.unwrap_or(1.0),
            }
        }
        "table" if pos.is_empty() => {
            let mut rows = std::mem::take(&mut kv.pairs)
                .into_iter()
                .map(|(r, v)| Ok((parse_number(&r)?, parse_number(&v)?)))
                .collect::<Result<Vec<_>>>()?;
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            CdFunction::Tabulated {
                grid: rows.iter().map(|r| r.0).collect(),
                values: rows.iter().map(|r| r.1).collect(),
            }
        }
        _ => return Err(bad(text)),
    };
    kv.finish()?;
    f.validate()?;
    Ok(f)
}

pub fn format_cdfun(f: &CdFunction) -> String {
    match f {
        CdFunction::Zero => "zero".into(),
        CdFunction::Power { n, delta } => format!("power:n={n},delta={delta}"),
        CdFunction::Nu {
            out_scale,
            c,
            d,
            arg_scale,
        } => format!("nu:{c},{d},scale={arg_scale},out={out_scale}"),
        CdFunction::Tabulated { grid, values } => {
            let rows: Vec<String> = grid.iter().zip(values).map(|(r, v)| format!("{r}={v}")).collect();
            format!("table:{}", rows.join(","))
        }
    }
}

pub fn parse_growth(text: &str) -> Result<GrowthFunction> {
    let (kind, pos, pairs) = split(text);
    if !pos.is_empty() {
        return Err(bad(text));
    }
    let mut kv = Keyed { text, pairs };
    let g = match kind.as_str() {
        "log" => GrowthFunction::Log {
            n: kv.require("n")?,
            kappa: kv.require("kappa")?,
        },
        "power" => GrowthFunction::PowerIntegral {
            n: kv.require("n")?,
            kappa: kv.require("kappa")?,
            delta: kv.require("delta")?,
        },
        "linear" => GrowthFunction::Linear { c: kv.require("c")? },
        _ => return Err(bad(text)),
    };
    kv.finish()?;
    g.validate()?;
    Ok(g)
}

pub fn format_growth(g: &GrowthFunction) -> String {
    match g {
        GrowthFunction::Log { n, kappa } => format!("log:n={n},kappa={kappa}"),
        GrowthFunction::PowerIntegral { n, kappa, delta } => format!("power:n={n},kappa={kappa},delta={delta}"),
        GrowthFunction::Linear { c } => format!("linear:c={c}"),
    }
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let (kind, pos, pairs) = split(text);
    if !pairs.is_empty() {
        return Err(bad(text));
    }
    let count = |s: &str| s.parse::<usize>().ok().filter(|&c| c >= 1).ok_or_else(|| bad(text));
    let grid = match kind.as_str() {
        "geom" => {
            let zero = pos.len() == 4 && pos[3] == "zero";
            if !(pos.len() == 3 || zero) {
                return Err(bad(text));
            }
            let (t0, ratio) = (parse_number(&pos[0])?, parse_number(&pos[1])?);
            if !(t0 > 0.0 && ratio > 1.0) {
                return Err(bad(text));
            }
            geometric_grid(t0, ratio, count(&pos[2])?, zero)
        }
        "lin" => {
            let [a, b, c] = pos.as_slice() else {
                return Err(bad(text));
            };
            let (a, b, c) = (parse_number(a)?, parse_number(b)?, count(c)?);
            if c == 1 {
                vec![a]
            } else {
                (0..c).map(|i| a + (b - a) * i as f64 / (c - 1) as f64).collect()
            }
        }
        _ => text.split(',').map(parse_number).collect::<Result<Vec<_>>>()?,
    };
    if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) {
        return Err(bad(text));
    }
    Ok(grid)
}
