//! Realized event times of a simple point process and the counting-process
//! view used to build empirical mean-count curves.

use crate::curve::{Curve, TimeGrid};
use crate::error::{Error, Result};

/// Sorted event timestamps of one realized point process.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTimes {
    times: Vec<f64>,
}

impl EventTimes {
    /// Validates that times are finite, nonnegative, and strictly increasing
    /// (the process is simple: no two events share a timestamp).
    pub fn new(times: Vec<f64>) -> Result<Self> {
        for (i, t) in times.iter().enumerate() {
            if !t.is_finite() || *t < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "event time {t} is not a finite nonnegative number"
                )));
            }
            if i > 0 && times[i - 1] >= *t {
                return Err(Error::InvalidInput(format!(
                    "event times must be strictly increasing, got {} then {}",
                    times[i - 1],
                    t
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn first(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

/// Number of events in the closed interval `[0, t]`.
///
/// An event exactly at `t` is counted.
pub fn count_at(events: &EventTimes, t: f64) -> usize {
    debug_assert!(t >= 0.0, "count_at queried at negative time {t}");
    events.times.partition_point(|s| *s <= t)
}

/// Mean cumulative count across trials, sampled on `grid`.
pub fn step_curve<'a, I>(events_list: I, grid: &TimeGrid) -> Result<Curve>
where
    I: IntoIterator<Item = &'a EventTimes>,
{
    let mut acc = vec![0.0; grid.len()];
    let mut m = 0usize;
    for events in events_list {
        m += 1;
        let times = events.times();
        let mut idx = 0;
        for (k, t) in grid.points().enumerate() {
            while idx < times.len() && times[idx] <= t {
                idx += 1;
            }
            acc[k] += idx as f64;
        }
    }
    if m == 0 {
        return Err(Error::NoTrials);
    }
    let inv = 1.0 / m as f64;
    for v in &mut acc {
        *v *= inv;
    }
    Curve::new(*grid, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn constructor_enforces_strict_increase() {
        assert!(EventTimes::new(vec![0.1, 0.1]).is_err());
        assert!(EventTimes::new(vec![0.2, 0.1]).is_err());
        assert!(EventTimes::new(vec![-0.1]).is_err());
        assert!(EventTimes::new(vec![0.1, 0.5, 2.0]).is_ok());
    }

    #[test]
    fn count_at_examples() {
        assert_eq!(count_at(&EventTimes::empty(), 1.0), 0);
        let ev = EventTimes::new(vec![0.5, 1.2]).unwrap();
        assert_eq!(count_at(&ev, 1.0), 1);
        // Closed-interval convention: the event at exactly t is included.
        assert_eq!(count_at(&ev, 1.2), 2);
    }

    #[test]
    fn count_at_is_nondecreasing() {
        let mut rng = rng_from_seed(11);
        let mut times: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 3.0).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let ev = EventTimes::new(times).unwrap();
        let mut prev = 0;
        for k in 0..=300 {
            let c = count_at(&ev, k as f64 * 0.01);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn step_curve_single_trial() {
        let grid = TimeGrid::new(0.0, 0.1, 11).unwrap();
        let ev = EventTimes::new(vec![0.1]).unwrap();
        let c = step_curve([&ev], &grid).unwrap();
        assert_eq!(c.values()[0], 0.0);
        for k in 1..11 {
            assert_eq!(c.values()[k], 1.0);
        }
    }

    #[test]
    fn step_curve_single_trial_is_integer_valued_step() {
        let grid = TimeGrid::new(0.0, 0.05, 61).unwrap();
        let ev = EventTimes::new(vec![0.21, 0.9, 2.4]).unwrap();
        let c = step_curve([&ev], &grid).unwrap();
        let mut prev = 0.0;
        for v in c.values() {
            assert_eq!(v.fract(), 0.0);
            assert!(*v >= prev);
            prev = *v;
        }
        assert_eq!(*c.values().last().unwrap(), 3.0);
    }

    #[test]
    fn step_curve_averages_trials() {
        let grid = TimeGrid::new(0.0, 0.1, 11).unwrap();
        let a = EventTimes::empty();
        let b = EventTimes::new(vec![0.1]).unwrap();
        let c = step_curve([&a, &b], &grid).unwrap();
        assert_eq!(c.values()[0], 0.0);
        assert_eq!(c.values()[5], 0.5);
    }

    #[test]
    fn step_curve_errors_on_empty_collection() {
        let grid = TimeGrid::new(0.0, 0.1, 11).unwrap();
        let none: [&EventTimes; 0] = [];
        assert!(matches!(step_curve(none, &grid), Err(Error::NoTrials)));
    }

    #[test]
    fn step_curve_of_poisson_trials_approaches_rate_line() {
        // 1000 unit-rate Poisson trials on [0,3]; the mean count is t.
        let grid = TimeGrid::new(0.0, 0.005, 601).unwrap();
        let mut trials = Vec::new();
        let mut rng = rng_from_seed(2024);
        for _ in 0..1000 {
            let mut t = 0.0;
            let mut times = Vec::new();
            loop {
                let u: f64 = rng.random();
                t -= (1.0 - u).ln();
                if t > 3.0 {
                    break;
                }
                times.push(t);
            }
            trials.push(EventTimes::new(times).unwrap());
        }
        let c = step_curve(trials.iter(), &grid).unwrap();
        let max_dev = grid
            .points()
            .enumerate()
            .map(|(k, t)| (c.values()[k] - t).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 0.15, "max deviation from t was {max_dev}");
    }
}
