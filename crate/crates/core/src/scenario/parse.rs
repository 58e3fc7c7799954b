//! Scenario file parser.

use super::{
    BoundaryMode, CalibrationParams, Coord, DestinationMarker, Generation, GridGeometry, GroupSpec,
    ScenarioSpec, SlopeArea, SlopeMarker, SpeedClass, StartMarker, CELL_SIDE_M,
};
use crate::rational::{parse_rational, rational_to_f64, Rational};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("semantic error: {message}")]
    Semantic { message: String },
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Syntax { line, column, message: message.into() }
}

fn semantic(message: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic { message: message.into() }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Map,
    Params,
    Start(u32),
    Slope(u32),
}

#[derive(Clone, Copy)]
enum MapToken {
    Free,
    Obstacle,
    Start(u32),
    Destination(u32),
    SlopeA(u32),
    SlopeB(u32),
}

#[derive(Default)]
struct RawSection {
    entries: BTreeMap<String, (usize, String)>, // key -> (line, value)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let mut section = Section::None;
    let mut map_rows: Vec<(usize, Vec<MapToken>)> = Vec::new();
    let mut params = RawSection::default();
    let mut starts: BTreeMap<u32, RawSection> = BTreeMap::new();
    let mut slopes: BTreeMap<u32, RawSection> = BTreeMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        // Comments are only recognised outside the map: '#' is an obstacle
        // cell inside it.
        let line = if section == Section::Map && !raw_line.trim_start().starts_with('[') {
            raw_line
        } else {
            match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('[') {
            section = parse_section_header(line_no, line, trimmed)?;
            match section {
                Section::Start(id) => {
                    starts.entry(id).or_default();
                }
                Section::Slope(id) => {
                    slopes.entry(id).or_default();
                }
                _ => {}
            }
            continue;
        }
        match section {
            Section::None => {
                return Err(syntax(line_no, 1, "content before first section header"));
            }
            Section::Map => {
                map_rows.push((line_no, parse_map_row(line_no, trimmed)?));
            }
            Section::Params => insert_entry(&mut params, line_no, line)?,
            Section::Start(id) => insert_entry(starts.get_mut(&id).unwrap(), line_no, line)?,
            Section::Slope(id) => insert_entry(slopes.get_mut(&id).unwrap(), line_no, line)?,
        }
    }

    assemble(map_rows, params, starts, slopes)
}

fn parse_section_header(line_no: usize, line: &str, trimmed: &str) -> Result<Section, ScenarioError> {
    let col = line.find('[').unwrap_or(0) + 1;
    let inner = trimmed
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| syntax(line_no, col, "malformed section header"))?;
    if inner == "map" {
        return Ok(Section::Map);
    }
    if inner == "params" {
        return Ok(Section::Params);
    }
    if let Some(id) = inner.strip_prefix("start.") {
        let id = id
            .parse()
            .map_err(|_| syntax(line_no, col, format!("invalid start id `{id}`")))?;
        return Ok(Section::Start(id));
    }
    if let Some(id) = inner.strip_prefix("slope.") {
        let id = id
            .parse()
            .map_err(|_| syntax(line_no, col, format!("invalid slope id `{id}`")))?;
        return Ok(Section::Slope(id));
    }
    Err(syntax(line_no, col, format!("unknown section `[{inner}]`")))
}

fn parse_map_row(line_no: usize, row: &str) -> Result<Vec<MapToken>, ScenarioError> {
    if row.contains(',') {
        let mut tokens = Vec::new();
        let mut col = 1;
        for piece in row.split(',') {
            tokens.push(parse_cell_token(line_no, col, piece.trim())?);
            col += piece.len() + 1;
        }
        Ok(tokens)
    } else {
        row.chars()
            .enumerate()
            .map(|(i, c)| parse_cell_token(line_no, i + 1, &c.to_string()))
            .collect()
    }
}

fn parse_cell_token(line_no: usize, col: usize, token: &str) -> Result<MapToken, ScenarioError> {
    match token {
        "." => return Ok(MapToken::Free),
        "#" => return Ok(MapToken::Obstacle),
        "" => return Err(syntax(line_no, col, "empty map cell")),
        _ => {}
    }
    let bad = || syntax(line_no, col, format!("unknown map cell `{token}`"));
    let (kind, rest) = token.split_at(1);
    match kind {
        "S" => rest.parse().map(MapToken::Start).map_err(|_| bad()),
        "D" => rest.parse().map(MapToken::Destination).map_err(|_| bad()),
        "A" => {
            if let Some(id) = rest.strip_suffix('a') {
                id.parse().map(MapToken::SlopeA).map_err(|_| bad())
            } else if let Some(id) = rest.strip_suffix('b') {
                id.parse().map(MapToken::SlopeB).map_err(|_| bad())
            } else {
                Err(bad())
            }
        }
        _ => Err(bad()),
    }
}

fn insert_entry(section: &mut RawSection, line_no: usize, line: &str) -> Result<(), ScenarioError> {
    let eq = line
        .find('=')
        .ok_or_else(|| syntax(line_no, line.len() + 1, "expected `key = value`"))?;
    let key = line[..eq].trim();
    let value = line[eq + 1..].trim();
    if key.is_empty() {
        return Err(syntax(line_no, 1, "missing key before `=`"));
    }
    if section
        .entries
        .insert(key.to_string(), (line_no, value.to_string()))
        .is_some()
    {
        return Err(semantic(format!("duplicate key `{key}` (line {line_no})")));
    }
    Ok(())
}

struct MarkerCells {
    starts: BTreeMap<u32, Vec<Coord>>,
    destinations: BTreeMap<u32, Vec<Coord>>,
    slopes_a: BTreeMap<u32, Vec<Coord>>,
    slopes_b: BTreeMap<u32, Vec<Coord>>,
}

fn assemble(
    map_rows: Vec<(usize, Vec<MapToken>)>,
    params: RawSection,
    start_sections: BTreeMap<u32, RawSection>,
    slope_sections: BTreeMap<u32, RawSection>,
) -> Result<ScenarioSpec, ScenarioError> {
    if map_rows.is_empty() {
        return Err(semantic("scenario has no [map] section or the map is empty"));
    }
    let width = map_rows[0].1.len();
    let height = map_rows.len();
    let mut obstacles = vec![false; width * height];
    let mut cells = MarkerCells {
        starts: BTreeMap::new(),
        destinations: BTreeMap::new(),
        slopes_a: BTreeMap::new(),
        slopes_b: BTreeMap::new(),
    };
    for (y, (line_no, row)) in map_rows.iter().enumerate() {
        if row.len() != width {
            return Err(syntax(
                *line_no,
                1,
                format!("map row has {} cells, expected {width}", row.len()),
            ));
        }
        for (x, token) in row.iter().enumerate() {
            let coord = Coord::new(x as i32, y as i32);
            match token {
                MapToken::Free => {}
                MapToken::Obstacle => obstacles[y * width + x] = true,
                MapToken::Start(id) => cells.starts.entry(*id).or_default().push(coord),
                MapToken::Destination(id) => cells.destinations.entry(*id).or_default().push(coord),
                MapToken::SlopeA(id) => cells.slopes_a.entry(*id).or_default().push(coord),
                MapToken::SlopeB(id) => cells.slopes_b.entry(*id).or_default().push(coord),
            }
        }
    }

    let (calibration, boundary) = parse_params(params)?;
    let geometry = GridGeometry { width, height, cell_side_m: CELL_SIDE_M, boundary };

    let destinations: BTreeMap<u32, DestinationMarker> = cells
        .destinations
        .iter()
        .map(|(id, cs)| (*id, DestinationMarker { id: *id, cells: cs.clone() }))
        .collect();

    let mut starts = BTreeMap::new();
    for (id, cs) in &cells.starts {
        let section = start_sections
            .get(id)
            .ok_or_else(|| semantic(format!("start area S{id} on the map has no [start.{id}] section")))?;
        starts.insert(*id, parse_start(*id, cs.clone(), section, &calibration, &destinations)?);
    }
    for id in start_sections.keys() {
        if !cells.starts.contains_key(id) {
            return Err(semantic(format!("[start.{id}] section has no S{id} cells on the map")));
        }
    }

    let mut slopes = BTreeMap::new();
    let slope_ids: std::collections::BTreeSet<u32> = cells
        .slopes_a
        .keys()
        .chain(cells.slopes_b.keys())
        .chain(slope_sections.keys())
        .copied()
        .collect();
    for id in slope_ids {
        let section = slope_sections
            .get(&id)
            .ok_or_else(|| semantic(format!("slope markers A{id} on the map have no [slope.{id}] section")))?;
        if !cells.slopes_a.contains_key(&id) && !cells.slopes_b.contains_key(&id) {
            return Err(semantic(format!("[slope.{id}] section has no A{id}a/A{id}b cells on the map")));
        }
        let get = |key: &str| -> Result<Rational, ScenarioError> {
            let (line, value) = section
                .entries
                .get(key)
                .ok_or_else(|| semantic(format!("[slope.{id}] is missing `{key}`")))?;
            let r = parse_rational(value)
                .map_err(|e| syntax(*line, 1, format!("invalid value for `{key}`: {e}")))?;
            if r == Rational::from_integer(0) {
                return Err(semantic(format!("[slope.{id}] `{key}` must be positive")));
            }
            Ok(r)
        };
        slopes.insert(
            id,
            SlopeArea {
                id,
                side_a: SlopeMarker {
                    cells: cells.slopes_a.get(&id).cloned().unwrap_or_default(),
                    k_enter: get("k_enter_a")?,
                    k_exit: get("k_exit_a")?,
                },
                side_b: SlopeMarker {
                    cells: cells.slopes_b.get(&id).cloned().unwrap_or_default(),
                    k_enter: get("k_enter_b")?,
                    k_exit: get("k_exit_b")?,
                },
            },
        );
    }

    Ok(ScenarioSpec { geometry, obstacles, starts, destinations, slopes, params: calibration })
}

fn parse_params(raw: RawSection) -> Result<(CalibrationParams, BoundaryMode), ScenarioError> {
    let mut p = CalibrationParams::default();
    let mut boundary = BoundaryMode::Open;
    for (key, (line, value)) in &raw.entries {
        let bad_num = |e: &dyn std::fmt::Display| syntax(*line, 1, format!("invalid value for `{key}`: {e}"));
        let float = || -> Result<f64, ScenarioError> {
            value.parse::<f64>().map_err(|e| bad_num(&e))
        };
        match key.as_str() {
            "kappa_g" => p.kappa_g = float()?,
            "kappa_ob" => p.kappa_ob = float()?,
            "kappa_s" => p.kappa_s = float()?,
            "kappa_c" => p.kappa_c = float()?,
            "kappa_i" => p.kappa_i = float()?,
            "kappa_d" => p.kappa_d = float()?,
            "kappa_ov" => p.kappa_ov = float()?,
            "delta" => p.delta = float()?,
            "R" => p.density_radius = float()?,
            "frict_l" => p.frict_l = float()?,
            "frict_h" => p.frict_h = float()?,
            "perception_distance" => p.perception_distance = float()?,
            "rho_sat" => p.rho_sat = float()?,
            "obstacle_span" => p.obstacle_span = float()?,
            "overlap_threshold" => p.overlap_threshold = float()?,
            "speed_m" => p.speed_m = parse_rational(value).map_err(|e| bad_num(&e))?,
            "rng_seed" => p.rng_seed = value.parse().map_err(|e| bad_num(&e))?,
            "boundary" => {
                boundary = match value.as_str() {
                    "open" => BoundaryMode::Open,
                    "periodic-x" => BoundaryMode::PeriodicX,
                    other => return Err(syntax(*line, 1, format!("unknown boundary mode `{other}`"))),
                }
            }
            other => return Err(semantic(format!("unknown parameter `{other}` (line {line})"))),
        }
    }
    if !(p.frict_l > 0.0 && p.frict_l < p.frict_h && p.frict_h <= 1.0) {
        return Err(semantic(format!(
            "friction thresholds out of order: need 0 < frict_l < frict_h <= 1, got ({}, {})",
            p.frict_l, p.frict_h
        )));
    }
    if p.speed_m == Rational::from_integer(0) {
        return Err(semantic("speed_m must be positive"));
    }
    if p.delta <= 0.0 {
        return Err(semantic("delta must be positive"));
    }
    if p.density_radius <= 0.0 {
        return Err(semantic("R (density radius) must be positive"));
    }
    if p.rho_sat <= 0.0 || p.obstacle_span <= 0.0 {
        return Err(semantic("rho_sat and obstacle_span must be positive"));
    }
    if p.perception_distance < 0.0 || p.overlap_threshold < 0.0 {
        return Err(semantic("perception_distance and overlap_threshold must be non-negative"));
    }
    Ok((p, boundary))
}

fn parse_start(
    id: u32,
    cells: Vec<Coord>,
    section: &RawSection,
    params: &CalibrationParams,
    destinations: &BTreeMap<u32, DestinationMarker>,
) -> Result<StartMarker, ScenarioError> {
    let mut generation = None;
    let mut speeds = None;
    let mut destination = None;
    let mut group = GroupSpec::None;
    for (key, (line, value)) in &section.entries {
        match key.as_str() {
            "generation" => generation = Some(parse_generation(*line, value)?),
            "speeds" => speeds = Some(parse_speeds(*line, value)?),
            "destination" => {
                destination = Some(
                    value
                        .parse::<u32>()
                        .map_err(|_| syntax(*line, 1, format!("invalid destination id `{value}`")))?,
                )
            }
            "group" => group = parse_group(*line, value)?,
            other => {
                return Err(semantic(format!("unknown key `{other}` in [start.{id}] (line {line})")))
            }
        }
    }
    let generation =
        generation.ok_or_else(|| semantic(format!("[start.{id}] is missing `generation`")))?;
    let speeds = speeds.ok_or_else(|| semantic(format!("[start.{id}] is missing `speeds`")))?;
    let destination =
        destination.ok_or_else(|| semantic(format!("[start.{id}] is missing `destination`")))?;
    if !destinations.contains_key(&destination) {
        return Err(semantic(format!(
            "[start.{id}] references destination {destination} which has no D{destination} cells"
        )));
    }
    let total: f64 = speeds.iter().map(|s| s.probability).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(semantic(format!(
            "[start.{id}] speed probabilities sum to {total}, expected 1"
        )));
    }
    for class in &speeds {
        if class.speed == Rational::from_integer(0) || class.speed > params.speed_m {
            return Err(semantic(format!(
                "[start.{id}] desired speed {} is outside (0, speed_m = {}]",
                rational_to_f64(class.speed),
                rational_to_f64(params.speed_m)
            )));
        }
    }
    if let Generation::Frequency(f) = generation {
        if !(f > 0.0) {
            return Err(semantic(format!("[start.{id}] generation frequency must be positive")));
        }
    }
    Ok(StartMarker { id, cells, generation, speeds, destination, group })
}

fn parse_generation(line: usize, value: &str) -> Result<Generation, ScenarioError> {
    if let Some(inner) = strip_call(value, "block") {
        let n = inner
            .parse()
            .map_err(|_| syntax(line, 1, format!("invalid block count `{inner}`")))?;
        return Ok(Generation::Block(n));
    }
    if let Some(inner) = strip_call(value, "frequency") {
        let f = inner
            .parse()
            .map_err(|_| syntax(line, 1, format!("invalid frequency `{inner}`")))?;
        return Ok(Generation::Frequency(f));
    }
    Err(syntax(line, 1, format!("expected `block(N)` or `frequency(F)`, got `{value}`")))
}

fn parse_speeds(line: usize, value: &str) -> Result<Vec<SpeedClass>, ScenarioError> {
    let mut classes = Vec::new();
    for piece in value.split(',') {
        let piece = piece.trim();
        let (speed, prob) = piece
            .split_once(':')
            .ok_or_else(|| syntax(line, 1, format!("expected `speed:probability`, got `{piece}`")))?;
        let speed = parse_rational(speed)
            .map_err(|e| syntax(line, 1, format!("invalid speed `{speed}`: {e}")))?;
        let probability = parse_probability(prob)
            .ok_or_else(|| syntax(line, 1, format!("invalid probability `{prob}`")))?;
        classes.push(SpeedClass { speed, probability });
    }
    if classes.is_empty() {
        return Err(syntax(line, 1, "empty speed list"));
    }
    Ok(classes)
}

fn parse_probability(text: &str) -> Option<f64> {
    let text = text.trim();
    let value = if let Some((n, d)) = text.split_once('/') {
        let n: f64 = n.trim().parse().ok()?;
        let d: f64 = d.trim().parse().ok()?;
        n / d
    } else {
        text.parse().ok()?
    };
    (value.is_finite() && (0.0..=1.0).contains(&value)).then_some(value)
}

fn parse_group(line: usize, value: &str) -> Result<GroupSpec, ScenarioError> {
    if value == "none" {
        return Ok(GroupSpec::None);
    }
    if let Some(inner) = strip_call(value, "simple") {
        let id = inner
            .parse()
            .map_err(|_| syntax(line, 1, format!("invalid group id `{inner}`")))?;
        return Ok(GroupSpec::Simple(id));
    }
    if let Some(inner) = strip_call(value, "structured") {
        let (g, s) = inner
            .split_once('.')
            .ok_or_else(|| syntax(line, 1, "expected `structured(GROUP.SUBGROUP)`"))?;
        let group = g.parse().map_err(|_| syntax(line, 1, format!("invalid group id `{g}`")))?;
        let subgroup = s.parse().map_err(|_| syntax(line, 1, format!("invalid subgroup id `{s}`")))?;
        return Ok(GroupSpec::Structured { group, subgroup });
    }
    Err(syntax(line, 1, format!("expected `none`, `simple(G)` or `structured(G.S)`, got `{value}`")))
}

fn strip_call<'a>(value: &'a str, name: &str) -> Option<&'a str> {
    value.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')').map(str::trim)
}
