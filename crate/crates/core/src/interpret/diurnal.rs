//! Hour-of-day averaging, optionally split into weekday/weekend groups
//! (Saturday/Sunday count as weekend).

use chrono::{Datelike, NaiveDateTime, Timelike, Weekday};

use crate::error::{Error, Result};

/// One cell of a diurnal table; `mean` is `None` when no data fell in the
/// hour (empty, not zero).
#[derive(Debug, Clone)]
pub struct DiurnalCell {
    pub hour: u32,
    /// `None` without a split, otherwise "weekday" or "weekend".
    pub group: Option<&'static str>,
    pub mean: Option<f64>,
    pub count: usize,
}

fn is_weekend(t: &NaiveDateTime) -> bool {
    matches!(t.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Mean of `values` per hour of day; with `split_weekend`, separately for
/// weekdays and weekends (48 cells, weekday block first).
pub fn diurnal(
    timestamps: &[NaiveDateTime],
    values: &[f64],
    split_weekend: bool,
) -> Result<Vec<DiurnalCell>> {
    if timestamps.len() != values.len() {
        return Err(Error::Invalid(format!(
            "{} timestamps vs {} values",
            timestamps.len(),
            values.len()
        )));
    }
    let groups: &[Option<&'static str>] = if split_weekend {
        &[Some("weekday"), Some("weekend")]
    } else {
        &[None]
    };
    let mut sums = vec![[0.0f64; 24]; groups.len()];
    let mut counts = vec![[0usize; 24]; groups.len()];
    for (t, v) in timestamps.iter().zip(values) {
        let g = if split_weekend {
            usize::from(is_weekend(t))
        } else {
            0
        };
        let h = t.hour() as usize;
        sums[g][h] += v;
        counts[g][h] += 1;
    }
    let mut cells = Vec::with_capacity(24 * groups.len());
    for (g, group) in groups.iter().enumerate() {
        for h in 0..24 {
            cells.push(DiurnalCell {
                hour: h as u32,
                group: *group,
                mean: (counts[g][h] > 0).then(|| sums[g][h] / counts[g][h] as f64),
                count: counts[g][h],
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").unwrap()
    }

    fn minute_span(start: &str, count: usize) -> Vec<NaiveDateTime> {
        let start = ts(start);
        (0..count)
            .map(|i| start + chrono::Duration::minutes(i as i64))
            .collect()
    }

    #[test]
    fn constant_series_has_flat_profile() {
        let times = minute_span("2023-02-06 00:00", 24 * 60); // a Monday
        let values = vec![3.5; times.len()];
        let cells = diurnal(&times, &values, false).unwrap();
        assert_eq!(cells.len(), 24);
        for cell in cells {
            assert_eq!(cell.count, 60);
            assert_relative_eq!(cell.mean.unwrap(), 3.5);
        }
    }

    #[test]
    fn hour_valued_series_is_identity() {
        use chrono::Timelike;
        let times = minute_span("2023-02-06 00:00", 24 * 60);
        let values: Vec<f64> = times.iter().map(|t| t.hour() as f64).collect();
        let cells = diurnal(&times, &values, false).unwrap();
        for (h, cell) in cells.iter().enumerate() {
            assert_relative_eq!(cell.mean.unwrap(), h as f64);
        }
    }

    #[test]
    fn weekday_spike_splits_correctly() {
        // Monday (weekday) carries a 7:00 spike; Saturday stays flat.
        let mut times = minute_span("2023-02-06 00:00", 24 * 60);
        times.extend(minute_span("2023-02-11 00:00", 24 * 60));
        let values: Vec<f64> = times
            .iter()
            .map(|t| {
                let base = 1.0;
                if !is_weekend(t) && t.hour() == 7 {
                    base + 10.0
                } else {
                    base
                }
            })
            .collect();
        let cells = diurnal(&times, &values, true).unwrap();
        assert_eq!(cells.len(), 48);
        let weekday7 = cells
            .iter()
            .find(|c| c.group == Some("weekday") && c.hour == 7)
            .unwrap();
        let weekend7 = cells
            .iter()
            .find(|c| c.group == Some("weekend") && c.hour == 7)
            .unwrap();
        assert!(weekday7.mean.unwrap() > weekend7.mean.unwrap());
        assert_relative_eq!(weekday7.mean.unwrap(), 11.0);
        assert_relative_eq!(weekend7.mean.unwrap(), 1.0);
    }

    #[test]
    fn empty_hours_are_marked_not_zeroed() {
        let times = minute_span("2023-02-06 10:00", 60);
        let values = vec![2.0; 60];
        let cells = diurnal(&times, &values, false).unwrap();
        assert!(cells[10].mean.is_some());
        assert!(cells[11].mean.is_none());
        assert_eq!(cells[11].count, 0);
    }

    #[test]
    fn count_weighted_means_recompose_the_global_mean() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let times = minute_span("2023-02-03 05:17", 5000);
        let values: Vec<f64> = (0..5000).map(|_| rng.random::<f64>() * 10.0).collect();
        let cells = diurnal(&times, &values, true).unwrap();
        let total: f64 = cells
            .iter()
            .filter_map(|c| c.mean.map(|m| m * c.count as f64))
            .sum();
        let count: usize = cells.iter().map(|c| c.count).sum();
        assert_eq!(count, 5000);
        let global = values.iter().sum::<f64>() / 5000.0;
        assert_relative_eq!(total / count as f64, global, epsilon = 1e-10);
    }
}
