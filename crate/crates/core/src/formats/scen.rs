//! SCEN: line-oriented `key = value` scenario descriptions.
//!
//! ```text
//! # comments and blank lines are ignored
//! shape = 16x16
//! steps = 50
//! seed = 7
//! noise_sigma = 0.05
//! archetype = preempted
//! background_logit = 4          # optional
//!
//! token.label = elephant        # opens a token block
//! token.center = 5 4            # row col
//! token.amplitude = 10
//! token.sigma = 2.5
//! token.drift = 0 0             # optional
//! token.expected_zone = rect 1 9 0 8   # optional; or `pixels 3 4 5`
//! ```
//!
//! `rect r0 r1 c0 c1` is the half-open rectangle `[r0, r1) × [c0, c1)`.
//! Rendering always writes zones as explicit pixel lists.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::attention::GridShape;
use crate::error::{Error, Result};
use crate::harness::scenario::{rect_zone, Archetype, BlobSpec, ScenarioSpec, DEFAULT_BACKGROUND_LOGIT};
use crate::regionsel::PixelSet;
use crate::scalar::Scalar;

const GLOBAL_KEYS: [&str; 6] = ["shape", "steps", "seed", "noise_sigma", "archetype", "background_logit"];
const REQUIRED_GLOBAL: [&str; 5] = ["shape", "steps", "seed", "noise_sigma", "archetype"];
const TOKEN_KEYS: [&str; 6] = ["label", "center", "amplitude", "sigma", "drift", "expected_zone"];
const REQUIRED_TOKEN: [&str; 4] = ["label", "center", "amplitude", "sigma"];

struct Entry<'a> {
    line: usize,
    value: &'a str,
}

#[derive(Default)]
struct TokenBlock<'a> {
    line: usize,
    entries: BTreeMap<&'static str, Entry<'a>>,
}

fn key_of(list: &[&'static str], key: &str) -> Option<&'static str> {
    list.iter().copied().find(|k| *k == key)
}

pub fn parse_scen<T: Scalar>(text: &str) -> Result<ScenarioSpec<T>> {
    let mut globals: BTreeMap<&'static str, Entry<'_>> = BTreeMap::new();
    let mut blocks: Vec<TokenBlock<'_>> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("expected `key = value`, found `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(sub) = key.strip_prefix("token.") {
            let k = key_of(&TOKEN_KEYS, sub).ok_or_else(|| Error::parse(line, format!("unknown key `{key}`")))?;
            if k == "label" {
                blocks.push(TokenBlock {
                    line,
                    entries: BTreeMap::new(),
                });
            }
            let block = blocks
                .last_mut()
                .ok_or_else(|| Error::parse(line, format!("`{key}` before any `token.label`")))?;
            if block.entries.insert(k, Entry { line, value }).is_some() {
                return Err(Error::parse(line, format!("duplicate key `{key}` in token block")));
            }
        } else {
            let k = key_of(&GLOBAL_KEYS, key).ok_or_else(|| Error::parse(line, format!("unknown key `{key}`")))?;
            if globals.insert(k, Entry { line, value }).is_some() {
                return Err(Error::parse(line, format!("duplicate key `{key}`")));
            }
        }
    }

    let end = text.lines().count().max(1);
    for key in REQUIRED_GLOBAL {
        if !globals.contains_key(key) {
            return Err(Error::parse(end, format!("missing required key `{key}`")));
        }
    }
    if blocks.is_empty() {
        return Err(Error::parse(end, "missing required key `token.label`"));
    }

    let shape = {
        let e = &globals["shape"];
        let (h, w) = e
            .value
            .split_once('x')
            .ok_or_else(|| Error::parse(e.line, "shape must read `<height>x<width>`"))?;
        let h = scalar_field::<usize>(h.trim(), e.line, "shape")?;
        let w = scalar_field::<usize>(w.trim(), e.line, "shape")?;
        GridShape::new(h, w).map_err(|err| Error::parse(e.line, err.to_string()))?
    };
    let num_steps = scalar_field(globals["steps"].value, globals["steps"].line, "steps")?;
    let seed = scalar_field(globals["seed"].value, globals["seed"].line, "seed")?;
    let noise_sigma = scalar_field(globals["noise_sigma"].value, globals["noise_sigma"].line, "noise_sigma")?;
    let archetype: Archetype = {
        let e = &globals["archetype"];
        e.value.parse().map_err(|err: Error| Error::parse(e.line, err.to_string()))?
    };
    let background_logit = match globals.get("background_logit") {
        Some(e) => scalar_field(e.value, e.line, "background_logit")?,
        None => T::lit(DEFAULT_BACKGROUND_LOGIT),
    };

    let mut tokens = Vec::with_capacity(blocks.len());
    for block in &blocks {
        for key in REQUIRED_TOKEN {
            if !block.entries.contains_key(key) {
                return Err(Error::parse(
                    block.line,
                    format!("missing required key `token.{key}`"),
                ));
            }
        }
        let get = |k: &str| &block.entries[k];
        let label = get("label").value.to_string();
        if label.is_empty() || label.contains(char::is_whitespace) {
            return Err(Error::parse(get("label").line, "token.label must be a single word"));
        }
        let center = pair_field(get("center"), "token.center")?;
        let amplitude = scalar_field(get("amplitude").value, get("amplitude").line, "token.amplitude")?;
        let sigma = scalar_field(get("sigma").value, get("sigma").line, "token.sigma")?;
        let drift = match block.entries.get("drift") {
            Some(e) => pair_field(e, "token.drift")?,
            None => (T::zero(), T::zero()),
        };
        let expected_zone = block
            .entries
            .get("expected_zone")
            .map(|e| zone_field(e, shape))
            .transpose()?;
        tokens.push(BlobSpec {
            label,
            center,
            amplitude,
            sigma,
            drift,
            expected_zone,
        });
    }

    let spec = ScenarioSpec {
        shape,
        num_steps,
        tokens,
        noise_sigma,
        seed,
        archetype,
        background_logit,
    };
    spec.validate().map_err(|e| Error::parse(end, e.to_string()))?;
    Ok(spec)
}

fn scalar_field<V: FromStr>(value: &str, line: usize, key: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid value `{value}` for `{key}`")))
}

fn pair_field<T: Scalar>(e: &Entry<'_>, key: &str) -> Result<(T, T)> {
    let parts: Vec<&str> = e.value.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(Error::parse(e.line, format!("`{key}` needs two numbers")));
    }
    Ok((
        scalar_field(parts[0], e.line, key)?,
        scalar_field(parts[1], e.line, key)?,
    ))
}

fn zone_field(e: &Entry<'_>, shape: GridShape) -> Result<PixelSet> {
    let mut parts = e.value.split_whitespace();
    let nums = |rest: std::str::SplitWhitespace<'_>| -> Result<Vec<usize>> {
        rest.map(|p| scalar_field(p, e.line, "token.expected_zone")).collect()
    };
    match parts.next() {
        Some("rect") => {
            let v = nums(parts)?;
            if v.len() != 4 {
                return Err(Error::parse(e.line, "`rect` takes four numbers: r0 r1 c0 c1"));
            }
            Ok(rect_zone(shape, (v[0], v[1]), (v[2], v[3])))
        }
        Some("pixels") => {
            let v = nums(parts)?;
            if let Some(&p) = v.iter().find(|&&p| p >= shape.num_pixels()) {
                return Err(Error::parse(e.line, format!("zone pixel {p} is outside the grid")));
            }
            Ok(v.into_iter().collect())
        }
        _ => Err(Error::parse(
            e.line,
            "token.expected_zone must start with `rect` or `pixels`",
        )),
    }
}

pub fn render_scen<T: Scalar>(spec: &ScenarioSpec<T>) -> String {
    let mut out = String::new();
    writeln!(out, "shape = {}x{}", spec.shape.height(), spec.shape.width()).unwrap();
    writeln!(out, "steps = {}", spec.num_steps).unwrap();
    writeln!(out, "seed = {}", spec.seed).unwrap();
    writeln!(out, "noise_sigma = {}", spec.noise_sigma).unwrap();
    writeln!(out, "archetype = {}", spec.archetype).unwrap();
    writeln!(out, "background_logit = {}", spec.background_logit).unwrap();
    for t in &spec.tokens {
        out.push('\n');
        writeln!(out, "token.label = {}", t.label).unwrap();
        writeln!(out, "token.center = {} {}", t.center.0, t.center.1).unwrap();
        writeln!(out, "token.amplitude = {}", t.amplitude).unwrap();
        writeln!(out, "token.sigma = {}", t.sigma).unwrap();
        writeln!(out, "token.drift = {} {}", t.drift.0, t.drift.1).unwrap();
        if let Some(zone) = &t.expected_zone {
            out.push_str("token.expected_zone = pixels");
            for p in zone {
                write!(out, " {p}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# two animals
shape = 16x16
steps = 10
seed = 3
noise_sigma = 0.05
archetype = clean

token.label = cat
token.center = 5 4
token.amplitude = 6
token.sigma = 2
token.expected_zone = rect 0 2 0 3

token.label = dog   # second
token.center = 11 12
token.amplitude = 6
token.sigma = 2
token.drift = 0.1 -0.2
";

    #[test]
    fn parses_sample() {
        let spec = parse_scen::<f64>(SAMPLE).unwrap();
        assert_eq!(spec.shape, GridShape::square(16).unwrap());
        assert_eq!(spec.num_steps, 10);
        assert_eq!(spec.archetype, Archetype::Clean);
        assert_eq!(spec.tokens.len(), 2);
        assert_eq!(spec.tokens[1].label, "dog");
        assert_eq!(spec.tokens[1].drift, (0.1, -0.2));
        assert_eq!(
            spec.tokens[0].expected_zone.as_ref().unwrap().iter().copied().collect::<Vec<_>>(),
            vec![0, 1, 2, 16, 17, 18]
        );
        assert_eq!(spec.background_logit, DEFAULT_BACKGROUND_LOGIT);
    }

    #[test]
    fn render_parse_round_trip() {
        for a in Archetype::ALL {
            let spec = ScenarioSpec::<f64>::preset(a, 99);
            assert_eq!(parse_scen::<f64>(&render_scen(&spec)).unwrap(), spec);
        }
    }

    fn message(text: &str) -> String {
        match parse_scen::<f64>(text) {
            Err(Error::Parse { message, .. }) => message,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert!(message(&SAMPLE.replace("seed = 3\n", "")).contains("`seed`"));
        assert!(message(&SAMPLE.replace("token.sigma = 2\ntoken.expected", "token.expected")).contains("`token.sigma`"));
        assert!(message(&format!("{SAMPLE}colour = red\n")).contains("`colour`"));
        assert!(message(&format!("{SAMPLE}token.flavor = x\n")).contains("`token.flavor`"));
        assert!(message(&format!("{SAMPLE}seed = 4\n")).contains("duplicate"));
        assert!(message(&SAMPLE.replace("noise_sigma = 0.05", "noise_sigma = loud")).contains("noise_sigma"));
    }

    #[test]
    fn errors_report_lines() {
        match parse_scen::<f64>(&SAMPLE.replace("steps = 10", "steps = ten")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn token_key_before_label_rejected() {
        let text = "token.center = 1 1\n";
        assert!(message(text).contains("before any"));
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(parse_scen::<f64>(&SAMPLE.replace("token.center = 5 4", "token.center = 20 4")).is_err());
        assert!(parse_scen::<f64>(&SAMPLE.replace("rect 0 2 0 3", "pixels 300")).is_err());
        assert!(parse_scen::<f64>(&SAMPLE.replace("16x16", "16by16")).is_err());
    }
}
