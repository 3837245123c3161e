//! Tab-separated file formats and CSV report writers.
//!
//! Every TSV writer starts with a `# format: v1` line followed by a comment
//! naming the columns. Readers skip blank and `#` lines, reject any other
//! declared version, and report parse failures with 1-based line numbers.
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! read back yields bit-identical values.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::eval::{City, CityTable, EvalReport, SweepRow};
use crate::geodesy::GeoPoint;
use crate::graph::{MentionRecord, SocialNetwork, UserId, WeightedEdge};
use crate::ground_truth::{Gazetteer, GpsEvent, GroundTruthRecord, ProfileClaim, SeedSet, SeedSource};
use crate::solver::{EstimateSource, EstimateState, LocationEstimate};

pub const FORMAT_VERSION: &str = "v1";

const NA: &str = "NA";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unsupported format version {found:?} (this build reads {FORMAT_VERSION})")]
    Version { line: usize, found: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

/// Data lines as (line number, text), after header and comment handling.
/// Also collects `# key: value` comments so readers can pick up metadata.
struct Lines {
    rows: Vec<(usize, String)>,
    meta: BTreeMap<String, String>,
}

fn read_lines<R: BufRead>(reader: R) -> Result<Lines, FormatError> {
    let mut rows = Vec::new();
    let mut meta = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let line = if no == 1 { line.trim_start_matches('\u{feff}') } else { line };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                let (key, value) = (key.trim(), value.trim());
                if key == "format" && value != FORMAT_VERSION {
                    return Err(FormatError::Version {
                        line: no,
                        found: value.to_string(),
                    });
                }
                meta.insert(key.to_string(), value.to_string());
            }
            continue;
        }
        rows.push((no, line.to_string()));
    }
    Ok(Lines { rows, meta })
}

fn fields(no: usize, line: &str, expected: usize) -> Result<Vec<&str>, FormatError> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != expected {
        return Err(parse_err(no, format!("expected {expected} tab-separated fields, found {}", f.len())));
    }
    Ok(f)
}

fn parse<T: std::str::FromStr>(no: usize, what: &str, s: &str) -> Result<T, FormatError>
where
    T::Err: std::fmt::Display,
{
    s.trim()
        .parse()
        .map_err(|e| parse_err(no, format!("bad {what} {s:?}: {e}")))
}

fn point(no: usize, lat: &str, lon: &str) -> Result<GeoPoint, FormatError> {
    let lat: f64 = parse(no, "latitude", lat)?;
    let lon: f64 = parse(no, "longitude", lon)?;
    GeoPoint::new(lat, lon).map_err(|e| parse_err(no, e.to_string()))
}

fn header<W: Write>(w: &mut W, columns: &[&str]) -> io::Result<()> {
    writeln!(w, "# format: {FORMAT_VERSION}")?;
    writeln!(w, "# {}", columns.join("\t"))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

/// `src_id<TAB>dst_id<TAB>count`.
pub fn read_mentions<R: BufRead>(reader: R) -> Result<Vec<MentionRecord>, FormatError> {
    read_lines(reader)?
        .rows
        .iter()
        .map(|(no, line)| {
            let f = fields(*no, line, 3)?;
            Ok(MentionRecord {
                src: parse(*no, "user id", f[0])?,
                dst: parse(*no, "user id", f[1])?,
                count: parse(*no, "count", f[2])?,
            })
        })
        .collect()
}

/// `u<TAB>v<TAB>weight`.
pub fn write_network<W: Write>(mut w: W, net: &SocialNetwork) -> io::Result<()> {
    header(&mut w, &["u", "v", "weight"])?;
    for e in net.edges() {
        writeln!(w, "{}\t{}\t{}", e.u(), e.v(), e.weight())?;
    }
    Ok(())
}

pub fn read_network<R: BufRead>(reader: R) -> Result<SocialNetwork, FormatError> {
    let edges = read_lines(reader)?
        .rows
        .iter()
        .map(|(no, line)| {
            let f = fields(*no, line, 3)?;
            WeightedEdge::new(
                parse(*no, "user id", f[0])?,
                parse(*no, "user id", f[1])?,
                parse(*no, "weight", f[2])?,
            )
            .map_err(|e| parse_err(*no, e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    SocialNetwork::from_edges(edges).map_err(|e| FormatError::Invalid(e.to_string()))
}

/// `user_id<TAB>lat<TAB>lon<TAB>unix_timestamp`.
pub fn read_gps<R: BufRead>(reader: R) -> Result<Vec<GpsEvent>, FormatError> {
    read_lines(reader)?
        .rows
        .iter()
        .map(|(no, line)| {
            let f = fields(*no, line, 4)?;
            Ok(GpsEvent {
                user: parse(*no, "user id", f[0])?,
                point: point(*no, f[1], f[2])?,
                timestamp: parse(*no, "timestamp", f[3])?,
            })
        })
        .collect()
}

/// `user_id<TAB>observed_at<TAB>raw_text`. Claims with blank text carry no
/// information; they are skipped and counted.
pub fn read_profiles<R: BufRead>(reader: R) -> Result<(Vec<ProfileClaim>, usize), FormatError> {
    let mut claims = Vec::new();
    let mut blank = 0;
    for (no, line) in read_lines(reader)?.rows {
        let f: Vec<&str> = line.splitn(3, '\t').collect();
        if f.len() != 3 {
            return Err(parse_err(no, format!("expected 3 tab-separated fields, found {}", f.len())));
        }
        if f[2].contains('\t') {
            return Err(parse_err(no, "profile text contains a tab"));
        }
        let user = parse(no, "user id", f[0])?;
        let observed_at = parse(no, "timestamp", f[1])?;
        match ProfileClaim::new(user, f[2], observed_at) {
            Ok(c) => claims.push(c),
            Err(_) => blank += 1,
        }
    }
    Ok((claims, blank))
}

/// `name<TAB>lat<TAB>lon`.
pub fn read_gazetteer<R: BufRead>(reader: R) -> Result<Gazetteer, FormatError> {
    let entries = read_lines(reader)?
        .rows
        .iter()
        .map(|(no, line)| {
            let f = fields(*no, line, 3)?;
            Ok((f[0].to_string(), point(*no, f[1], f[2])?))
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Gazetteer::from_entries(entries).map_err(|e| FormatError::Invalid(e.to_string()))
}

/// `user_id<TAB>lat<TAB>lon<TAB>source<TAB>spread_km`.
pub fn write_seeds<W: Write>(mut w: W, records: &[GroundTruthRecord]) -> io::Result<()> {
    header(&mut w, &["user_id", "lat", "lon", "source", "spread_km"])?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.user,
            r.home.lat(),
            r.home.lon(),
            r.source,
            r.spread_km
        )?;
    }
    Ok(())
}

/// Writes a bare location map in the seed format with a fixed source.
pub fn write_seed_set<W: Write>(w: W, seeds: &SeedSet, source: SeedSource) -> io::Result<()> {
    let records: Vec<GroundTruthRecord> = seeds
        .iter()
        .map(|(user, home)| GroundTruthRecord {
            user,
            home,
            source,
            spread_km: 0.0,
        })
        .collect();
    write_seeds(w, &records)
}

pub fn read_seeds<R: BufRead>(reader: R) -> Result<Vec<GroundTruthRecord>, FormatError> {
    let mut seen = std::collections::HashSet::new();
    read_lines(reader)?
        .rows
        .iter()
        .map(|(no, line)| {
            let f = fields(*no, line, 5)?;
            let user: UserId = parse(*no, "user id", f[0])?;
            if !seen.insert(user) {
                return Err(parse_err(*no, format!("user {user} listed twice")));
            }
            Ok(GroundTruthRecord {
                user,
                home: point(*no, f[1], f[2])?,
                source: parse(*no, "source", f[3])?,
                spread_km: parse(*no, "spread", f[4])?,
            })
        })
        .collect()
}

pub fn read_seed_set<R: BufRead>(reader: R) -> Result<SeedSet, FormatError> {
    Ok(read_seeds(reader)?.iter().collect())
}

/// `user_id<TAB>lat<TAB>lon<TAB>dispersion_km<TAB>source<TAB>first_located_iteration`,
/// users ascending. The round count is kept in an `# iterations:` comment.
pub fn write_estimates<W: Write>(mut w: W, state: &EstimateState) -> io::Result<()> {
    header(
        &mut w,
        &["user_id", "lat", "lon", "dispersion_km", "source", "first_located_iteration"],
    )?;
    writeln!(w, "# iterations: {}", state.iteration)?;
    for e in state.iter() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            e.user,
            e.point.lat(),
            e.point.lon(),
            opt(e.dispersion_km),
            e.source,
            e.first_located_iteration
        )?;
    }
    Ok(())
}

pub fn read_estimates<R: BufRead>(reader: R) -> Result<EstimateState, FormatError> {
    let lines = read_lines(reader)?;
    let mut estimates = Vec::with_capacity(lines.rows.len());
    for (no, line) in &lines.rows {
        let no = *no;
        let f = fields(no, line, 6)?;
        let dispersion_km = match f[3].trim() {
            NA => None,
            s => Some(parse::<f64>(no, "dispersion", s)?),
        };
        estimates.push(LocationEstimate {
            user: parse(no, "user id", f[0])?,
            point: point(no, f[1], f[2])?,
            dispersion_km,
            source: parse::<EstimateSource>(no, "source", f[4])?,
            first_located_iteration: parse(no, "iteration", f[5])?,
        });
    }
    let iteration = match lines.meta.get("iterations") {
        Some(v) => v
            .parse()
            .map_err(|_| FormatError::Invalid(format!("bad iterations comment {v:?}")))?,
        None => estimates.iter().map(|e| e.first_located_iteration).max().unwrap_or(0),
    };
    Ok(EstimateState::from_estimates(iteration, estimates))
}

/// `name<TAB>lat<TAB>lon<TAB>population`.
pub fn read_city_table<R: BufRead>(reader: R) -> Result<CityTable, FormatError> {
    let entries = read_lines(reader)?
        .rows
        .iter()
        .map(|(no, line)| {
            let f = fields(*no, line, 4)?;
            Ok(City {
                name: f[0].to_string(),
                point: point(*no, f[1], f[2])?,
                population: parse(*no, "population", f[3])?,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    CityTable::new(entries).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn write_city_table<W: Write>(mut w: W, cities: &[City]) -> io::Result<()> {
    header(&mut w, &["name", "lat", "lon", "population"])?;
    for c in cities {
        writeln!(w, "{}\t{}\t{}\t{}", c.name, c.point.lat(), c.point.lon(), c.population)?;
    }
    Ok(())
}

/// `user_id<TAB>city_index`.
pub fn write_assignments<W: Write>(mut w: W, assignment: &BTreeMap<UserId, usize>) -> io::Result<()> {
    header(&mut w, &["user_id", "city_index"])?;
    for (u, c) in assignment {
        writeln!(w, "{u}\t{c}")?;
    }
    Ok(())
}

pub fn read_assignments<R: BufRead>(reader: R) -> Result<BTreeMap<UserId, usize>, FormatError> {
    read_lines(reader)?
        .rows
        .iter()
        .map(|(no, line)| {
            let f = fields(*no, line, 2)?;
            Ok((parse(*no, "user id", f[0])?, parse(*no, "city index", f[1])?))
        })
        .collect()
}

/// One-row summary CSV.
pub fn write_eval_summary<W: Write>(mut w: W, report: &EvalReport) -> io::Result<()> {
    writeln!(w, "test_users,located,coverage,median_error_km,mean_error_km,city_accuracy")?;
    writeln!(
        w,
        "{},{},{},{},{},{}",
        report.test_users,
        report.located,
        report.coverage,
        opt(report.median_error_km),
        opt(report.mean_error_km),
        opt(report.city_accuracy)
    )
}

pub fn write_per_iteration<W: Write>(mut w: W, report: &EvalReport) -> io::Result<()> {
    writeln!(w, "iteration,located,newly_located,median_error_km,median_error_new_km")?;
    for r in &report.per_iteration {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.iteration,
            r.located,
            r.added,
            opt(r.median_error_km),
            opt(r.median_error_new_km)
        )?;
    }
    Ok(())
}

pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "gamma_km,located,coverage,median_error_km,mean_error_km")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.gamma_km,
            r.located,
            r.coverage,
            opt(r.median_error_km),
            opt(r.mean_error_km)
        )?;
    }
    Ok(())
}

/// Rows of `lower_km,upper_km,count`; the last bin has upper bound `inf`.
pub fn write_histogram<W: Write>(mut w: W, edges: &[f64], counts: &[usize]) -> io::Result<()> {
    writeln!(w, "lower_km,upper_km,count")?;
    for (i, c) in counts.iter().enumerate() {
        let lower = if i == 0 { 0.0 } else { edges[i - 1] };
        let upper = edges.get(i).copied().unwrap_or(f64::INFINITY);
        writeln!(w, "{lower},{upper},{c}")?;
    }
    Ok(())
}
