//! Run measurements: fundamental-diagram samples, per-class walking speeds
//! and the cumulative mean density map.
//!
//! Speeds are Euclidean displacement over a sliding window of steps, so
//! diagonal geometry is honoured. A pedestrian's window resets on recycle
//! teleports and on slope area changes, keeping each sample homogeneous.

use crate::behavior::Pedestrian;
use crate::engine::World;
use crate::rational::{rational_to_f64, Rational};
use crate::scalar::Scalar;
use crate::scenario::{AreaId, Coord, GridGeometry, PedId, ScenarioSpec};
use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Inclusive cell rectangle inside which densities and speeds are sampled.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MeasurementArea {
    pub min: Coord,
    pub max: Coord,
}

impl MeasurementArea {
    pub fn whole_grid(geometry: &GridGeometry) -> Self {
        MeasurementArea {
            min: Coord::new(0, 0),
            max: Coord::new(geometry.width as i32 - 1, geometry.height as i32 - 1),
        }
    }

    pub fn contains(&self, c: Coord) -> bool {
        c.x >= self.min.x && c.x <= self.max.x && c.y >= self.min.y && c.y <= self.max.y
    }

    /// Walkable area in m²; obstacle cells inside the rectangle do not count.
    pub fn walkable_area_m2(&self, spec: &ScenarioSpec) -> f64 {
        let mut cells = 0usize;
        for y in self.min.y..=self.max.y {
            for x in self.min.x..=self.max.x {
                if spec.is_walkable(Coord::new(x, y)) {
                    cells += 1;
                }
            }
        }
        cells as f64 * spec.geometry.cell_side_m * spec.geometry.cell_side_m
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MetricsConfig {
    /// Sliding window length in steps for displacement speeds.
    pub window: usize,
    /// Steps discarded before sampling starts.
    pub warmup_steps: u64,
    pub area: MeasurementArea,
    /// Width of the density bins used for per-class statistics, persons/m².
    pub class_bin_width: f64,
}

impl MetricsConfig {
    pub fn for_spec(spec: &ScenarioSpec, warmup_steps: u64) -> Self {
        MetricsConfig {
            window: 10,
            warmup_steps,
            area: MeasurementArea::whole_grid(&spec.geometry),
            class_bin_width: 0.25,
        }
    }
}

/// One fundamental-diagram sample: the density over the measurement area and
/// the mean walking speed of the pedestrians with a complete window.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct FdSample {
    pub density: f64,
    pub mean_speed: f64,
    pub n_samples: usize,
}

#[derive(Clone, Copy, Default, PartialEq, Debug)]
pub struct RunningStat {
    pub n: u64,
    sum: f64,
    sum_sq: f64,
}

impl RunningStat {
    pub fn push(&mut self, value: f64) {
        self.n += 1;
        self.sum += value;
        self.sum_sq += value * value;
    }

    pub fn merge(&mut self, other: &RunningStat) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.sum / self.n as f64
    }

    /// Sample standard deviation (0 for fewer than two samples).
    pub fn sd(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0).sqrt()
    }
}

/// Per-cell running sum of perceived density and visit count. The cumulative
/// mean density of a cell is sum/count, defined only where count > 0.
#[derive(Clone, Debug)]
pub struct CmdGrid {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    count: Vec<u64>,
}

impl CmdGrid {
    fn new(geometry: &GridGeometry) -> Self {
        CmdGrid {
            width: geometry.width,
            height: geometry.height,
            sum: vec![0.0; geometry.cell_count()],
            count: vec![0; geometry.cell_count()],
        }
    }

    pub fn value(&self, c: Coord) -> Option<f64> {
        if c.x < 0 || c.y < 0 || c.x as usize >= self.width || c.y as usize >= self.height {
            return None;
        }
        let index = c.y as usize * self.width + c.x as usize;
        (self.count[index] > 0).then(|| self.sum[index] / self.count[index] as f64)
    }

    pub fn visits(&self, c: Coord) -> u64 {
        let index = c.y as usize * self.width + c.x as usize;
        self.count[index]
    }

    /// Mean CMD over a set of cells, ignoring unvisited ones.
    pub fn mean_over(&self, cells: &[Coord]) -> Option<f64> {
        let values: Vec<f64> = cells.iter().filter_map(|&c| self.value(c)).collect();
        if values.is_empty() {
            return None;
        }
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Unvisited cells masked to 0 for heatmap export.
    pub fn masked_values(&self) -> Vec<f64> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect()
    }

    pub fn write_pgm(&self, path: &Path) -> io::Result<()> {
        crate::pgm::write_pgm16(path, self.width, self.height, &self.masked_values())
    }
}

#[derive(Clone, Debug)]
struct Track {
    positions: VecDeque<Coord>,
    teleports: u32,
    area: Option<AreaId>,
}

/// Aggregated per-class row: desired-speed class, density bin lower edge,
/// mean/sd of the observed speed and the sample count.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct ClassRow {
    pub class: f64,
    pub density_bin: f64,
    pub mean: f64,
    pub sd: f64,
    pub n: u64,
}

pub struct MetricsAccumulator {
    cfg: MetricsConfig,
    cell_side: f64,
    dt: f64,
    area_m2: f64,
    tracks: BTreeMap<PedId, Track>,
    fd: Vec<FdSample>,
    class_stats: BTreeMap<(Rational, Option<AreaId>, i64), RunningStat>,
    cmd: CmdGrid,
}

impl MetricsAccumulator {
    pub fn new(spec: &ScenarioSpec, cfg: MetricsConfig) -> Self {
        MetricsAccumulator {
            cell_side: spec.geometry.cell_side_m,
            dt: spec.params.step_duration_s(),
            area_m2: cfg.area.walkable_area_m2(spec),
            tracks: BTreeMap::new(),
            fd: Vec::new(),
            class_stats: BTreeMap::new(),
            cmd: CmdGrid::new(&spec.geometry),
            cfg,
        }
    }

    pub fn fd_samples(&self) -> &[FdSample] {
        &self.fd
    }

    pub fn cmd(&self) -> &CmdGrid {
        &self.cmd
    }

    pub fn measurement_area_m2(&self) -> f64 {
        self.area_m2
    }

    /// Call once after every world step.
    pub fn observe<F: Scalar>(&mut self, world: &World<F>) {
        self.update_tracks(world);
        if world.step_count() <= self.cfg.warmup_steps {
            return;
        }
        self.sample_fundamental(world);
        self.update_cmd(world);
    }

    fn update_tracks(&mut self, world: &World<impl Scalar>) {
        let mut live: Vec<PedId> = Vec::new();
        for ped in world.pedestrians() {
            live.push(ped.id);
            let track = self.tracks.entry(ped.id).or_insert_with(|| Track {
                positions: VecDeque::new(),
                teleports: ped.teleports,
                area: ped.current_area,
            });
            // Teleports and slope transitions invalidate the window.
            if track.teleports != ped.teleports || track.area != ped.current_area {
                track.positions.clear();
                track.teleports = ped.teleports;
                track.area = ped.current_area;
            }
            track.positions.push_back(ped.pos);
            while track.positions.len() > self.cfg.window + 1 {
                track.positions.pop_front();
            }
        }
        self.tracks.retain(|id, _| live.binary_search(id).is_ok());
    }

    /// Window speed in m/s for pedestrians whose track covers the full
    /// window.
    fn window_speed(&self, ped: &Pedestrian) -> Option<f64> {
        let track = self.tracks.get(&ped.id)?;
        if track.positions.len() != self.cfg.window + 1 {
            return None;
        }
        let from = *track.positions.front().unwrap();
        let to = *track.positions.back().unwrap();
        Some(from.distance_cells(to) * self.cell_side / (self.cfg.window as f64 * self.dt))
    }

    fn sample_fundamental(&mut self, world: &World<impl Scalar>) {
        let inside: Vec<&Pedestrian> = world
            .pedestrians()
            .filter(|p| self.cfg.area.contains(p.pos))
            .collect();
        if inside.is_empty() {
            return; // empty area: sample skipped
        }
        let density = inside.len() as f64 / self.area_m2;
        let speeds: Vec<(&Pedestrian, f64)> = inside
            .iter()
            .filter_map(|p| self.window_speed(p).map(|s| (*p, s)))
            .collect();
        if speeds.is_empty() {
            return;
        }
        let mean_speed = speeds.iter().map(|(_, s)| s).sum::<f64>() / speeds.len() as f64;
        self.fd.push(FdSample { density, mean_speed, n_samples: speeds.len() });
        let bin = (density / self.cfg.class_bin_width).floor() as i64;
        for (ped, speed) in speeds {
            self.class_stats
                .entry((ped.speed_spawn, ped.current_area, bin))
                .or_default()
                .push(speed);
        }
    }

    /// Adds each pedestrian's perceived density (own contribution removed,
    /// the 4x field calibration inverted) at its current cell.
    fn update_cmd(&mut self, world: &World<impl Scalar>) {
        for ped in world.pedestrians() {
            let value = world.density_field().val(ped.pos).to_f64().unwrap_or(0.0);
            let index = ped.pos.y as usize * self.cmd.width + ped.pos.x as usize;
            self.cmd.sum[index] += (value - 1.0) / 4.0;
            self.cmd.count[index] += 1;
        }
    }

    /// Observed speed statistics for one class, merged over areas and bins
    /// selected by the filter.
    pub fn class_stat_where(
        &self,
        class: Rational,
        mut filter: impl FnMut(Option<AreaId>, f64) -> bool,
    ) -> RunningStat {
        let mut merged = RunningStat::default();
        for ((c, area, bin), stat) in &self.class_stats {
            if *c == class && filter(*area, *bin as f64 * self.cfg.class_bin_width) {
                merged.merge(stat);
            }
        }
        merged
    }

    /// Class speed statistics keyed by (class, density bin), areas merged.
    pub fn class_stats_by_bin(&self) -> BTreeMap<(Rational, i64), RunningStat> {
        let mut merged: BTreeMap<(Rational, i64), RunningStat> = BTreeMap::new();
        for ((class, _area, bin), stat) in &self.class_stats {
            merged.entry((*class, *bin)).or_default().merge(stat);
        }
        merged
    }

    pub fn class_bin_width(&self) -> f64 {
        self.cfg.class_bin_width
    }

    /// Per-class speed table grouped by density bin (areas merged), sorted by
    /// class then bin. Empty classes yield no rows.
    pub fn class_rows(&self) -> Vec<ClassRow> {
        class_rows_from_stats(&self.class_stats_by_bin(), self.cfg.class_bin_width)
    }

    pub fn write_fd_csv(&self, path: &Path) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "density,mean_speed,n_samples")?;
        for s in &self.fd {
            writeln!(out, "{},{},{}", s.density, s.mean_speed, s.n_samples)?;
        }
        out.flush()
    }

    pub fn write_classes_csv(&self, path: &Path) -> io::Result<()> {
        write_classes_csv(path, &self.class_rows())
    }

    pub fn write_cmd_pgm(&self, path: &Path) -> io::Result<()> {
        self.cmd.write_pgm(path)
    }
}

/// Builds the CSV row form from merged class statistics.
pub fn class_rows_from_stats(
    stats: &BTreeMap<(Rational, i64), RunningStat>,
    bin_width: f64,
) -> Vec<ClassRow> {
    stats
        .iter()
        .map(|((class, bin), stat)| ClassRow {
            class: rational_to_f64(*class),
            density_bin: *bin as f64 * bin_width,
            mean: stat.mean(),
            sd: stat.sd(),
            n: stat.n,
        })
        .collect()
}

pub fn write_fd_csv_rows(path: &Path, rows: &[FdSample]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "density,mean_speed,n_samples")?;
    for s in rows {
        writeln!(out, "{},{},{}", s.density, s.mean_speed, s.n_samples)?;
    }
    out.flush()
}

pub fn write_classes_csv(path: &Path, rows: &[ClassRow]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "class,density_bin,mean,sd,n")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.class, r.density_bin, r.mean, r.sd, r.n)?;
    }
    out.flush()
}

/// Streams one CSV row per live pedestrian per step:
/// `step,id,x,y,action,speed_d,area`.
pub struct TrajectoryWriter {
    out: BufWriter<File>,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "step,id,x,y,action,speed_d,area")?;
        Ok(TrajectoryWriter { out })
    }

    pub fn record<F: Scalar>(&mut self, world: &World<F>) -> io::Result<()> {
        let step = world.step_count();
        for ped in world.pedestrians() {
            let area = ped.current_area.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                self.out,
                "{step},{},{},{},{},{},{area}",
                ped.id,
                ped.pos.x,
                ped.pos.y,
                ped.last_action.label(),
                rational_to_f64(ped.speed_desired),
            )?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}
