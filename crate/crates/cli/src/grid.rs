use std::str::FromStr;

/// `start:stop:points[:log]`, inclusive of both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub log: bool,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                let t = i as f64 / last;
                if self.log {
                    (self.start.ln() + t * (self.stop.ln() - self.start.ln())).exp()
                } else if i + 1 == self.points {
                    self.stop
                } else {
                    self.start + t * (self.stop - self.start)
                }
            })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let log = match parts.len() {
            3 => false,
            4 if parts[3] == "log" => true,
            4 if parts[3] == "lin" => false,
            _ => return Err(format!("expected start:stop:points[:log], got `{s}`")),
        };
        let bound = |t: &str| -> Result<f64, String> {
            let v: f64 = t.parse().map_err(|_| format!("bad grid bound `{t}`"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("grid bound `{t}` must be finite"))
            }
        };
        let start = bound(parts[0])?;
        let stop = bound(parts[1])?;
        let points: usize = parts[2]
            .parse()
            .map_err(|_| format!("bad point count `{}`", parts[2]))?;
        if points < 2 {
            return Err(format!("a grid needs at least 2 points, got {points}"));
        }
        if log && !(start > 0.0 && stop > 0.0) {
            return Err("log grids need positive bounds".into());
        }
        Ok(Grid {
            start,
            stop,
            points,
            log,
        })
    }
}

/// Inverse temperature that may be `inf` or `-inf`.
pub fn parse_beta(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad inverse temperature `{s}`"))?;
    if v.is_nan() {
        Err("inverse temperature must not be NaN".into())
    } else {
        Ok(v)
    }
}

pub fn parse_finite(s: &str) -> Result<f64, String> {
    let v = parse_beta(s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` must be finite"))
    }
}
