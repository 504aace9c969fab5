//! Synthetic ozone seasons with a known number of threshold exceedances.
//!
//! Each record is one target day. Temperature, wind and sky cover follow
//! autocorrelated processes; the noon concentration is that of the previous
//! day. Peaks respond smoothly to the weather and stay below the threshold,
//! except on planted stagnation days (hot, calm, mostly clear) which exceed
//! it. About half of the other days that happen to show the same pattern are
//! near misses just under the threshold; the rest get a breeze.

use chrono::{Days, NaiveDate};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CategoricalParameter, CategoricalSeries, Interval, RawRecord, Schema};
use crate::error::{Error, Result};
use crate::rng;

pub const SKY_SLOTS: usize = 8;
pub const SKY_CLASSES: [&str; 3] = ["clear", "partly", "overcast"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub threshold: f64,
    pub train_exceedances: usize,
    pub validation_exceedances: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            threshold: 180.0,
            train_exceedances: 5,
            validation_exceedances: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeason {
    pub train: Vec<RawRecord>,
    pub validation: Vec<RawRecord>,
}

pub fn schema() -> Schema {
    Schema {
        date: "date".into(),
        target: "peak".into(),
        persistence: "o3_noon".into(),
        numeric: vec!["t_min".into(), "t_max".into(), "wind_speed".into()],
        categorical: vec![CategoricalParameter {
            name: "sky".into(),
            classes: SKY_CLASSES.iter().map(|c| c.to_string()).collect(),
        }],
    }
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// Four summers of training days (613 in all) and one validation summer of 105.
fn periods() -> (Vec<(NaiveDate, usize)>, (NaiveDate, usize)) {
    (
        vec![
            (date(1999, 4, 30), 154),
            (date(2000, 5, 1), 153),
            (date(2001, 5, 1), 153),
            (date(2002, 5, 1), 153),
        ],
        (date(2003, 6, 1), 105),
    )
}

fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

struct Weather {
    t_min: f64,
    t_max: f64,
    wind: f64,
    sky: Vec<&'static str>,
}

impl Weather {
    fn clear_fraction(&self) -> f64 {
        self.sky.iter().filter(|s| **s == SKY_CLASSES[0]).count() as f64 / self.sky.len() as f64
    }

    fn stagnant(&self) -> bool {
        self.t_max > 31.0 && self.wind < 2.0 && self.clear_fraction() > 0.7
    }
}

struct Generator {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    heat: f64,
    cloud: f64,
    breeze: f64,
    peak: f64,
}

impl Generator {
    fn gauss(&mut self, sd: f64) -> f64 {
        sd * self.noise.sample(&mut self.rng)
    }

    fn weather(&mut self, phase: f64) -> Weather {
        self.heat = 0.75 * self.heat + self.gauss(0.66);
        self.cloud = 0.6 * self.cloud - 0.25 * self.heat + self.gauss(0.75);
        self.breeze = 0.5 * self.breeze + self.gauss(0.87);
        let t_max = 21.0 + 6.0 * (std::f64::consts::PI * phase).sin() + 3.5 * self.heat;
        let t_min = t_max - 10.0 + self.gauss(1.5);
        let wind = (1.2 + 0.35 * self.breeze).exp();
        let sky = (0..SKY_SLOTS)
            .map(|_| {
                let u = self.cloud + self.gauss(0.7);
                if u < -0.4 {
                    SKY_CLASSES[0]
                } else if u < 0.6 {
                    SKY_CLASSES[1]
                } else {
                    SKY_CLASSES[2]
                }
            })
            .collect();
        Weather {
            t_min: round1(t_min),
            t_max: round1(t_max),
            wind: round1(wind.max(0.3)),
            sky,
        }
    }

    fn stagnation(&mut self) -> Weather {
        let t_max = 32.0 + 4.0 * self.rng.random::<f64>();
        let sky = (0..SKY_SLOTS)
            .map(|_| {
                if self.rng.random::<f64>() < 0.85 {
                    SKY_CLASSES[0]
                } else {
                    SKY_CLASSES[1]
                }
            })
            .collect();
        Weather {
            t_min: round1(t_max - 9.0 + self.gauss(1.0)),
            t_max: round1(t_max),
            wind: round1(0.8 + self.rng.random::<f64>()),
            sky,
        }
    }

    fn smooth_peak(&mut self, w: &Weather) -> f64 {
        95.0 + 60.0 * ((w.t_max - 24.0) / 8.0).tanh() + 22.0 * (w.clear_fraction() - 0.4)
            - 7.0 * (w.wind - 3.5)
            + 0.3 * (self.peak - 110.0)
            + self.gauss(9.0)
    }

    fn season(
        &mut self,
        start: NaiveDate,
        len: usize,
        planted: &[usize],
        threshold: f64,
    ) -> Vec<RawRecord> {
        let ceiling = threshold - 20.0;
        let mut out = Vec::with_capacity(len);
        // One unrecorded day to set the previous noon value.
        self.peak = 100.0 + self.gauss(15.0);
        for t in 0..len {
            let noon = (0.75 * self.peak + self.gauss(6.0)).max(5.0);
            let phase = (t as f64 + 0.5) / len as f64;
            let mut w = self.weather(phase);
            let peak = if planted.contains(&t) {
                w = self.stagnation();
                threshold + 4.0 + 30.0 * self.rng.random::<f64>()
            } else {
                let near_miss = w.stagnant() && self.rng.random::<bool>();
                if w.stagnant() && !near_miss {
                    w.wind = round1(2.0 + 0.5 * self.rng.random::<f64>());
                }
                let g = self.smooth_peak(&w);
                let capped = if g > ceiling {
                    ceiling + 18.0 * ((g - ceiling) / 18.0).tanh()
                } else {
                    g
                };
                if near_miss {
                    capped.max(ceiling + 5.0 + 12.0 * self.rng.random::<f64>())
                } else {
                    capped.max(15.0)
                }
            };
            self.peak = round1(peak);
            let slots = w
                .sky
                .iter()
                .enumerate()
                .map(|(k, s)| (Interval::slice(k, SKY_SLOTS), s.to_string()))
                .collect();
            out.push(RawRecord {
                date: start + Days::new(t as u64),
                target_peak: Some(self.peak),
                ozone_noon: round1(noon),
                numeric: vec![
                    ("t_min".into(), w.t_min),
                    ("t_max".into(), w.t_max),
                    ("wind_speed".into(), w.wind),
                ],
                categorical: vec![CategoricalSeries {
                    parameter: "sky".into(),
                    slots,
                }],
            });
        }
        out
    }
}

/// Spread `count` planted days over seasons of the given lengths, never on
/// a season's first day. Returns per-season day offsets.
fn plant(rng: &mut ChaCha8Rng, lengths: &[usize], count: usize) -> Result<Vec<Vec<usize>>> {
    let slots: Vec<(usize, usize)> = lengths
        .iter()
        .enumerate()
        .flat_map(|(s, &len)| (1..len).map(move |t| (s, t)))
        .collect();
    if count > slots.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot plant {count} exceedances in {} days",
            slots.len()
        )));
    }
    let mut out = vec![Vec::new(); lengths.len()];
    for k in index::sample(rng, slots.len(), count) {
        let (s, t) = slots[k];
        out[s].push(t);
    }
    Ok(out)
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticSeason> {
    if !(cfg.threshold > 40.0) {
        return Err(Error::InvalidConfig(format!("threshold {} too low", cfg.threshold)));
    }
    let (train_periods, (val_start, val_len)) = periods();
    let mut picker = rng::stream(cfg.seed, 0);
    let lengths: Vec<usize> = train_periods.iter().map(|p| p.1).collect();
    let train_planted = plant(&mut picker, &lengths, cfg.train_exceedances)?;
    let val_planted = plant(&mut picker, &[val_len], cfg.validation_exceedances)?;

    let mut g = Generator {
        rng: rng::stream(cfg.seed, 1),
        noise: Normal::new(0.0, 1.0).expect("unit normal"),
        heat: 0.0,
        cloud: 0.0,
        breeze: 0.0,
        peak: 100.0,
    };
    let mut train = Vec::new();
    for ((start, len), planted) in train_periods.iter().zip(&train_planted) {
        train.extend(g.season(*start, *len, planted, cfg.threshold));
    }
    let validation = g.season(val_start, val_len, &val_planted[0], cfg.threshold);
    Ok(SyntheticSeason { train, validation })
}
