//! Derived weather features and windowing.
//!
//! Three features are derived from the six measured ones:
//!
//! * dew point from vapor pressure by inverting the Magnus saturation
//!   formula (a = 17.67, b = 243.5 degC, 611.2 Pa at 0 degC),
//! * relative humidity as `100 * vp / es(tmean)` clipped to [0, 100],
//! * corn growing degree days in Fahrenheit-days with the usual 50/86 degF
//!   floor and cap: `max(0, (min(tmaxF, 86) + max(tminF, 50)) / 2 - 50)`.
//!
//! Daily values are then averaged over consecutive non-overlapping 5-day
//! windows and padded or truncated to exactly 43 steps per channel.

use chrono::NaiveDate;

use super::{DayWeather, WeatherSeries, WEATHER_STEPS, WINDOW_DAYS};
use crate::error::{Error, Result};

const MAGNUS_A: f64 = 17.67;
const MAGNUS_B: f64 = 243.5;
const SATURATION_VP_0C: f64 = 611.2;

/// Saturation vapor pressure in Pa at temperature `t` in degC.
pub fn saturation_vapor_pressure(t: f64) -> f64 {
    SATURATION_VP_0C * (MAGNUS_A * t / (t + MAGNUS_B)).exp()
}

/// Dew point in degC from actual vapor pressure in Pa.
pub fn dew_point(vp: f64) -> Result<f64> {
    if vp <= 0.0 {
        return Err(Error::Data(format!("vapor pressure must be positive, got {vp}")));
    }
    let g = (vp / SATURATION_VP_0C).ln();
    Ok(MAGNUS_B * g / (MAGNUS_A - g))
}

fn to_fahrenheit(c: f64) -> f64 {
    c * 9.0 / 5.0 + 32.0
}

/// Corn growing degree days for one day, in degF-days.
pub fn growing_degree_days(tmax_c: f64, tmin_c: f64) -> f64 {
    let hi = to_fahrenheit(tmax_c).min(86.0);
    let lo = to_fahrenheit(tmin_c).max(50.0);
    ((hi + lo) / 2.0 - 50.0).max(0.0)
}

/// One day with all nine channel values, ordered as
/// [`super::WEATHER_CHANNELS`].
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedDay {
    pub date: NaiveDate,
    pub values: [f64; 9],
}

/// Fill dew point, relative humidity and growing degree days for one day.
pub fn derive_weather(day: &DayWeather) -> Result<DerivedDay> {
    if day.tmax < day.tmin {
        return Err(Error::Data(format!(
            "tmax {} below tmin {} on {}",
            day.tmax, day.tmin, day.date
        )));
    }
    let dew = dew_point(day.vp)?;
    let tmean = (day.tmax + day.tmin) / 2.0;
    let rh = (100.0 * day.vp / saturation_vapor_pressure(tmean)).clamp(0.0, 100.0);
    let gdd = growing_degree_days(day.tmax, day.tmin);
    Ok(DerivedDay {
        date: day.date,
        values: [
            day.srad, day.vp, day.prcp, day.tmax, day.tmin, day.wind, dew, rh, gdd,
        ],
    })
}

/// Average consecutive non-overlapping 5-day windows (the last window may
/// cover fewer days), truncate to 43 steps, and right-pad shorter series
/// with the per-channel mean of that record's observed windows.
pub fn window_and_pad(env_id: &str, days: &[DerivedDay]) -> Result<WeatherSeries> {
    if days.is_empty() {
        return Err(Error::Data(format!(
            "no weather days for environment {env_id:?}"
        )));
    }
    let mut windows: Vec<[f64; 9]> = Vec::new();
    for chunk in days.chunks(WINDOW_DAYS) {
        let mut mean = [0.0; 9];
        for day in chunk {
            for (m, v) in mean.iter_mut().zip(&day.values) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= chunk.len() as f64;
        }
        windows.push(mean);
    }
    windows.truncate(WEATHER_STEPS);

    let observed = windows.len();
    let mut pad = [0.0; 9];
    for w in &windows {
        for (p, v) in pad.iter_mut().zip(w) {
            *p += v;
        }
    }
    for p in pad.iter_mut() {
        *p /= observed as f64;
    }

    let mut values = vec![0.0; 9 * WEATHER_STEPS];
    for c in 0..9 {
        for t in 0..WEATHER_STEPS {
            values[c * WEATHER_STEPS + t] = if t < observed { windows[t][c] } else { pad[c] };
        }
    }
    Ok(WeatherSeries::from_values(env_id.to_string(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;
    use approx::assert_abs_diff_eq;

    fn day(vp: f64, tmax: f64, tmin: f64) -> DayWeather {
        DayWeather {
            date: NaiveDate::from_ymd_opt(2015, 6, 1).unwrap(),
            srad: 200.0,
            vp,
            prcp: 0.0,
            tmax,
            tmin,
            wind: 3.0,
        }
    }

    #[test]
    fn dew_point_at_saturation_reference() {
        // 611.2 Pa is saturation at 0 degC, so the dew point is 0 degC.
        let d = dew_point(611.2).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 0.1);
        assert!(dew_point(0.0).is_err());
        assert!(dew_point(-5.0).is_err());
    }

    #[test]
    fn gdd_fixed_points() {
        // 30 degC = 86 degF, 10 degC = 50 degF: (86 + 50)/2 - 50 = 18.
        assert_eq!(growing_degree_days(30.0, 10.0), 18.0);
        // Cap and floor both bind: 40 degC -> 86 degF, 0 degC -> 50 degF.
        assert_eq!(growing_degree_days(40.0, 0.0), 18.0);
        // Cold day clamps to zero.
        assert_eq!(growing_degree_days(5.0, -10.0), 0.0);
    }

    #[test]
    fn gdd_nonnegative_and_rh_clipped_on_random_inputs() {
        let mut rng = RngStream::new(31, "weather/random");
        for _ in 0..2000 {
            let tmin = rng.uniform_in(-30.0, 35.0);
            let tmax = tmin + rng.uniform_in(0.0, 25.0);
            let vp = rng.uniform_in(1.0, 7000.0);
            let derived = derive_weather(&day(vp, tmax, tmin)).unwrap();
            let rh = derived.values[7];
            let gdd = derived.values[8];
            assert!((0.0..=100.0).contains(&rh), "rh {rh}");
            assert!(gdd >= 0.0, "gdd {gdd}");
        }
    }

    #[test]
    fn derive_fills_channels_in_order() {
        let derived = derive_weather(&day(611.2, 30.0, 10.0)).unwrap();
        assert_eq!(derived.values[0], 200.0);
        assert_eq!(derived.values[3], 30.0);
        assert_abs_diff_eq!(derived.values[6], 0.0, epsilon = 0.1);
        assert_eq!(derived.values[8], 18.0);
    }

    fn constant_days(n: usize, value: f64) -> Vec<DerivedDay> {
        (0..n)
            .map(|i| DerivedDay {
                date: NaiveDate::from_ymd_opt(2015, 5, 1).unwrap() + chrono::Days::new(i as u64),
                values: [value; 9],
            })
            .collect()
    }

    #[test]
    fn full_season_gives_43_windows() {
        let days = constant_days(215, 2.0);
        let series = window_and_pad("a_2015", &days).unwrap();
        assert_eq!(series.channel(0).len(), WEATHER_STEPS);
        assert!(series.values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn short_season_pads_with_observed_mean() {
        let days = constant_days(10, 7.0);
        let series = window_and_pad("a_2015", &days).unwrap();
        // 2 observed windows of 7, then 41 pad columns also equal to 7.
        assert!(series.channel(4).iter().all(|&v| v == 7.0));
    }

    #[test]
    fn partial_final_window_averages_fewer_days() {
        let mut days = constant_days(7, 0.0);
        for (i, d) in days.iter_mut().enumerate() {
            d.values = [(i + 1) as f64; 9];
        }
        let series = window_and_pad("a_2015", &days).unwrap();
        // window 1 = mean(1..=5) = 3, window 2 = mean(6, 7) = 6.5
        assert_eq!(series.channel(0)[0], 3.0);
        assert_eq!(series.channel(0)[1], 6.5);
    }

    #[test]
    fn overlong_season_truncates() {
        let days = constant_days(500, 1.0);
        let series = window_and_pad("a_2015", &days).unwrap();
        assert_eq!(series.values().len(), 9 * WEATHER_STEPS);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(window_and_pad("a_2015", &[]).is_err());
    }
}
