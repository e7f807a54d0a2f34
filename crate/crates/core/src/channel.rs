//! Large-scale channel model: distance- and frequency-dependent pathloss with
//! log-normal shadowing, expressed as linear gain-to-noise ratios.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{Band, BandPropagationParams, ScenarioConfig, Topology};

/// Pathloss in dB: `gamma*10log10(f/f0) + beta*10log10(d/d0) + shadow_db`.
pub fn pathloss_db(
    d_m: f64,
    d0_m: f64,
    params: &BandPropagationParams,
    shadow_db: f64,
) -> Result<f64> {
    if !(d_m > 0.0) || !d_m.is_finite() {
        return Err(Error::NonPositiveDistance(d_m));
    }
    let freq = params.gamma * 10.0 * (params.carrier_ghz / params.f0_ghz).log10();
    let dist = params.beta * 10.0 * (d_m / d0_m).log10();
    Ok(freq + dist + shadow_db)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Gain for a given shadowing realisation.
pub fn gain_with_shadow(
    d_m: f64,
    d0_m: f64,
    params: &BandPropagationParams,
    shadow_db: f64,
) -> Result<f64> {
    Ok(db_to_linear(-pathloss_db(d_m, d0_m, params, shadow_db)?))
}

fn shadowing(params: &BandPropagationParams) -> Normal<f64> {
    Normal::new(0.0, params.shadow_sigma_db).expect("validated shadowing sigma")
}

/// Draws a shadowing value and returns the linear gain-to-noise ratio.
pub fn gain_linear<R: Rng + ?Sized>(
    d_m: f64,
    d0_m: f64,
    params: &BandPropagationParams,
    rng: &mut R,
) -> Result<f64> {
    let chi = shadowing(params).sample(rng);
    gain_with_shadow(d_m, d0_m, params, chi)
}

/// LTE gains from an LTE macro cell to the users and over the relays of that
/// macro, for users of a cell that has no LTE air interface.
#[derive(Clone, Debug, PartialEq)]
pub struct FallbackGains {
    pub macro_cell: usize,
    pub relays: usize,
    /// `[subcarrier][macro relay][user]`
    pub alpha_mk: Vec<f64>,
    /// `[subcarrier][user]`
    pub alpha_fk: Vec<f64>,
}

/// Gain tables of one cell. Units are `(band, subcarrier)` pairs numbered
/// `band_position * n + subcarrier`, with bands in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGains {
    pub bands: Vec<Band>,
    pub n: usize,
    pub relays: usize,
    pub users: usize,
    /// `[unit][relay]`
    pub alpha_fm: Vec<f64>,
    /// `[unit][relay][user]`
    pub alpha_mk: Vec<f64>,
    /// `[unit][user]`
    pub alpha_fk: Vec<f64>,
    pub fallback: Option<FallbackGains>,
}

impl CellGains {
    pub fn zeros(bands: Vec<Band>, n: usize, relays: usize, users: usize) -> CellGains {
        let units = bands.len() * n;
        CellGains {
            bands,
            n,
            relays,
            users,
            alpha_fm: vec![0.0; units * relays],
            alpha_mk: vec![0.0; units * relays * users],
            alpha_fk: vec![0.0; units * users],
            fallback: None,
        }
    }

    pub fn units(&self) -> usize {
        self.bands.len() * self.n
    }

    pub fn unit(&self, band: Band, subcarrier: usize) -> Option<usize> {
        let pos = self.bands.iter().position(|b| *b == band)?;
        (subcarrier < self.n).then_some(pos * self.n + subcarrier)
    }

    pub fn unit_band(&self, unit: usize) -> Band {
        self.bands[unit / self.n]
    }

    pub fn fm(&self, unit: usize, m: usize) -> f64 {
        self.alpha_fm[unit * self.relays + m]
    }

    pub fn mk(&self, unit: usize, m: usize, k: usize) -> f64 {
        self.alpha_mk[(unit * self.relays + m) * self.users + k]
    }

    pub fn fk(&self, unit: usize, k: usize) -> f64 {
        self.alpha_fk[unit * self.users + k]
    }

    pub fn fm_mut(&mut self, unit: usize, m: usize) -> &mut f64 {
        &mut self.alpha_fm[unit * self.relays + m]
    }

    pub fn mk_mut(&mut self, unit: usize, m: usize, k: usize) -> &mut f64 {
        &mut self.alpha_mk[(unit * self.relays + m) * self.users + k]
    }

    pub fn fk_mut(&mut self, unit: usize, k: usize) -> &mut f64 {
        &mut self.alpha_fk[unit * self.users + k]
    }

    /// Copy restricted to `bands` (kept in canonical order).
    pub fn restrict(&self, bands: &[Band]) -> CellGains {
        let kept: Vec<Band> = self.bands.iter().copied().filter(|b| bands.contains(b)).collect();
        let mut out = CellGains::zeros(kept.clone(), self.n, self.relays, self.users);
        for (new_pos, band) in kept.iter().enumerate() {
            let old_pos = self.bands.iter().position(|b| b == band).unwrap();
            for i in 0..self.n {
                let (src, dst) = (old_pos * self.n + i, new_pos * self.n + i);
                for m in 0..self.relays {
                    *out.fm_mut(dst, m) = self.fm(src, m);
                    for k in 0..self.users {
                        *out.mk_mut(dst, m, k) = self.mk(src, m, k);
                    }
                }
                for k in 0..self.users {
                    *out.fk_mut(dst, k) = self.fk(src, k);
                }
            }
        }
        out.fallback = self.fallback.clone();
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelGains {
    pub cells: Vec<CellGains>,
}

impl ChannelGains {
    /// FNV-1a hash over every gain's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for byte in x.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for c in &self.cells {
            c.alpha_fm.iter().chain(&c.alpha_mk).chain(&c.alpha_fk).for_each(|x| eat(*x));
            if let Some(fb) = &c.fallback {
                fb.alpha_mk.iter().chain(&fb.alpha_fk).for_each(|x| eat(*x));
            }
        }
        h
    }

    pub fn all_positive_finite(&self) -> bool {
        self.cells.iter().all(|c| {
            let fb = c.fallback.iter().flat_map(|f| f.alpha_mk.iter().chain(&f.alpha_fk));
            c.alpha_fm
                .iter()
                .chain(&c.alpha_mk)
                .chain(&c.alpha_fk)
                .chain(fb)
                .all(|x| x.is_finite() && *x > 0.0)
        })
    }
}

impl CellGains {
    /// The first `n` subcarriers of every band.
    pub fn truncate_subcarriers(&self, n: usize) -> CellGains {
        let n = n.min(self.n);
        let mut out = CellGains::zeros(self.bands.clone(), n, self.relays, self.users);
        for pos in 0..self.bands.len() {
            for i in 0..n {
                let (src, dst) = (pos * self.n + i, pos * n + i);
                for m in 0..self.relays {
                    *out.fm_mut(dst, m) = self.fm(src, m);
                    for k in 0..self.users {
                        *out.mk_mut(dst, m, k) = self.mk(src, m, k);
                    }
                }
                for k in 0..self.users {
                    *out.fk_mut(dst, k) = self.fk(src, k);
                }
            }
        }
        out.fallback = self.fallback.as_ref().map(|fb| FallbackGains {
            alpha_mk: fb.alpha_mk[..n * fb.relays * self.users].to_vec(),
            alpha_fk: fb.alpha_fk[..n * self.users].to_vec(),
            ..fb.clone()
        });
        out
    }
}

impl ChannelGains {
    pub fn truncate_subcarriers(&self, n: usize) -> ChannelGains {
        ChannelGains {
            cells: self.cells.iter().map(|c| c.truncate_subcarriers(n)).collect(),
        }
    }
}

/// Canonical band order of a cell.
pub fn cell_bands(bands: &[Band]) -> Vec<Band> {
    Band::ALL.into_iter().filter(|b| bands.contains(b)).collect()
}

/// Fills every gain table. Shadowing is drawn independently per
/// (link, band, subcarrier); pass `shadowing = false` to zero every draw.
pub fn generate_gains_with<R: Rng + ?Sized>(
    scenario: &ScenarioConfig,
    topology: &Topology,
    rng: &mut R,
    shadowing: bool,
) -> Result<ChannelGains> {
    let n = scenario.subcarriers_per_band;
    let mut cells = Vec::with_capacity(scenario.cells.len());
    for (l, (cell, topo)) in scenario.cells.iter().zip(&topology.cells).enumerate() {
        let bands = cell_bands(&cell.bands);
        let (relays, users) = (cell.num_relays, cell.num_users);
        let mut g = CellGains::zeros(bands.clone(), n, relays, users);
        let d0 = cell.d0_ref_m;
        for (pos, band) in bands.iter().enumerate() {
            let params = scenario
                .propagation(l, *band)
                .ok_or_else(|| Error::InvalidScenario(vec![format!("no parameters for band {band}")]))?;
            let dist = shadowing.then(|| self::shadowing(&params));
            let draw = |d: f64, rng: &mut R| {
                let chi = dist.as_ref().map_or(0.0, |s| s.sample(rng));
                gain_with_shadow(d, d0, &params, chi)
            };
            for i in 0..n {
                let unit = pos * n + i;
                for m in 0..relays {
                    *g.fm_mut(unit, m) = draw(topo.d_bs_relay[m], rng)?;
                }
                for m in 0..relays {
                    for k in 0..users {
                        *g.mk_mut(unit, m, k) = draw(topo.d_relay_user[m][k], rng)?;
                    }
                }
                for k in 0..users {
                    *g.fk_mut(unit, k) = draw(topo.d_bs_user[k], rng)?;
                }
            }
        }
        if let Some(fb) = &topo.fallback {
            let host = &scenario.cells[fb.macro_cell];
            let params = scenario
                .propagation(fb.macro_cell, Band::Lte)
                .ok_or_else(|| Error::InvalidScenario(vec!["no parameters for band LTE".into()]))?;
            let dist = shadowing.then(|| self::shadowing(&params));
            let draw = |d: f64, rng: &mut R| {
                let chi = dist.as_ref().map_or(0.0, |s| s.sample(rng));
                gain_with_shadow(d, host.d0_ref_m, &params, chi)
            };
            let host_relays = host.num_relays;
            let mut alpha_mk = Vec::with_capacity(n * host_relays * users);
            let mut alpha_fk = Vec::with_capacity(n * users);
            for _ in 0..n {
                for m in 0..host_relays {
                    for k in 0..users {
                        alpha_mk.push(draw(fb.d_relay_user[m][k], rng)?);
                    }
                }
                for k in 0..users {
                    alpha_fk.push(draw(fb.d_bs_user[k], rng)?);
                }
            }
            g.fallback = Some(FallbackGains {
                macro_cell: fb.macro_cell,
                relays: host_relays,
                alpha_mk,
                alpha_fk,
            });
        }
        cells.push(g);
    }
    Ok(ChannelGains { cells })
}

pub fn generate_gains<R: Rng + ?Sized>(
    scenario: &ScenarioConfig,
    topology: &Topology,
    rng: &mut R,
) -> Result<ChannelGains> {
    generate_gains_with(scenario, topology, rng, true)
}

const CSV_HEADER: &str = "cell,link_type,band,subcarrier,tx,rx,gain";

/// Serializes gains as CSV. BS indices are written as `tx=0` for BS links;
/// relays and users are zero-based. Fallback links use the `fallback_`
/// prefix and the macro cell's relay indices.
pub fn gains_to_csv(gains: &ChannelGains) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (l, c) in gains.cells.iter().enumerate() {
        for unit in 0..c.units() {
            let band = c.unit_band(unit);
            let i = unit % c.n;
            for m in 0..c.relays {
                let _ = writeln!(s, "{l},bs_relay,{band},{i},0,{m},{:e}", c.fm(unit, m));
            }
            for m in 0..c.relays {
                for k in 0..c.users {
                    let _ = writeln!(s, "{l},relay_user,{band},{i},{m},{k},{:e}", c.mk(unit, m, k));
                }
            }
            for k in 0..c.users {
                let _ = writeln!(s, "{l},bs_user,{band},{i},0,{k},{:e}", c.fk(unit, k));
            }
        }
        if let Some(fb) = &c.fallback {
            for i in 0..c.n {
                for m in 0..fb.relays {
                    for k in 0..c.users {
                        let g = fb.alpha_mk[(i * fb.relays + m) * c.users + k];
                        let _ = writeln!(s, "{l},fallback_relay_user,LTE,{i},{m},{k},{g:e}");
                    }
                }
                for k in 0..c.users {
                    let g = fb.alpha_fk[i * c.users + k];
                    let _ = writeln!(s, "{l},fallback_bs_user,LTE,{i},0,{k},{g:e}");
                }
            }
        }
    }
    s
}

pub fn save_gains_csv(gains: &ChannelGains, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, gains_to_csv(gains)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses gains written by [`gains_to_csv`]; table shapes come from `scenario`.
pub fn gains_from_csv(text: &str, scenario: &ScenarioConfig, path: &Path) -> Result<ChannelGains> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let n = scenario.subcarriers_per_band;
    let lte_macro = scenario.lte_macro();
    let mut cells: Vec<CellGains> = scenario
        .cells
        .iter()
        .enumerate()
        .map(|(l, c)| {
            let mut g = CellGains::zeros(cell_bands(&c.bands), n, c.num_relays, c.num_users);
            if let Some(m) = lte_macro.filter(|m| *m != l && !c.supports(Band::Lte)) {
                let relays = scenario.cells[m].num_relays;
                g.fallback = Some(FallbackGains {
                    macro_cell: m,
                    relays,
                    alpha_mk: vec![0.0; n * relays * c.num_users],
                    alpha_fk: vec![0.0; n * c.num_users],
                });
            }
            g
        })
        .collect();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(err(1, format!("expected header `{CSV_HEADER}`"))),
    }
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(err(lineno, format!("expected 7 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| err(lineno, format!("{s}: {e}")));
        let l = num(f[0])?;
        let band = Band::parse(f[2]).ok_or_else(|| err(lineno, format!("unknown band {}", f[2])))?;
        let (i, tx, rx) = (num(f[3])?, num(f[4])?, num(f[5])?);
        let gain: f64 = f[6].parse().map_err(|e| err(lineno, format!("{}: {e}", f[6])))?;
        let c = cells.get_mut(l).ok_or_else(|| err(lineno, format!("no cell {l}")))?;
        let bounds = |ok: bool| if ok { Ok(()) } else { Err(err(lineno, "index out of range".into())) };
        match f[1] {
            "bs_relay" | "relay_user" | "bs_user" => {
                let unit = c.unit(band, i).ok_or_else(|| err(lineno, "unit out of range".into()))?;
                match f[1] {
                    "bs_relay" => {
                        bounds(rx < c.relays)?;
                        *c.fm_mut(unit, rx) = gain;
                    }
                    "relay_user" => {
                        bounds(tx < c.relays && rx < c.users)?;
                        *c.mk_mut(unit, tx, rx) = gain;
                    }
                    _ => {
                        bounds(rx < c.users)?;
                        *c.fk_mut(unit, rx) = gain;
                    }
                }
            }
            "fallback_relay_user" | "fallback_bs_user" => {
                let users = c.users;
                let fb = c.fallback.as_mut().ok_or_else(|| err(lineno, "cell has no fallback links".into()))?;
                bounds(i < n && rx < users)?;
                if f[1] == "fallback_relay_user" {
                    bounds(tx < fb.relays)?;
                    fb.alpha_mk[(i * fb.relays + tx) * users + rx] = gain;
                } else {
                    fb.alpha_fk[i * users + rx] = gain;
                }
            }
            other => return Err(err(lineno, format!("unknown link type {other}"))),
        }
    }
    let gains = ChannelGains { cells };
    if !gains.all_positive_finite() {
        return Err(err(0, "missing or nonpositive gain entries".into()));
    }
    Ok(gains)
}

pub fn load_gains_csv(path: impl AsRef<Path>, scenario: &ScenarioConfig) -> Result<ChannelGains> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    gains_from_csv(&text, scenario, path)
}
