//! Region file ingestion: CSV with header `id,x,y,population,cases[,structural_zero]`.

use std::io::Read;
use std::path::Path;

use crate::error::{Result, ScanError};
use crate::map::{CaseData, Region, RegionMap};

const REQUIRED: [&str; 5] = ["id", "x", "y", "population", "cases"];

pub fn read_region_file(path: impl AsRef<Path>) -> Result<(RegionMap, CaseData)> {
    let file = std::fs::File::open(path.as_ref())?;
    read_region_csv(file)
}

pub fn read_region_csv<R: Read>(reader: R) -> Result<(RegionMap, CaseData)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_d = match names.as_slice() {
        [a, b, c, d, e] if [*a, *b, *c, *d, *e] == REQUIRED => false,
        [a, b, c, d, e, f] if [*a, *b, *c, *d, *e] == REQUIRED && *f == "structural_zero" => true,
        _ => {
            return Err(ScanError::Parse {
                line: 1,
                message: format!(
                    "expected header `id,x,y,population,cases[,structural_zero]`, got `{}`",
                    names.join(",")
                ),
            })
        }
    };

    let mut regions = Vec::new();
    let mut counts = Vec::new();
    let mut flags = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let real = |i: usize, name: &str| -> Result<f64> {
            field(i).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| ScanError::Parse {
                line,
                message: format!("`{name}` is not a finite number: `{}`", field(i)),
            })
        };
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(ScanError::Parse { line, message: "empty region id".into() });
        }
        let population = real(3, "population")?;
        if population < 0.0 {
            return Err(ScanError::Parse { line, message: format!("negative population {population}") });
        }
        let cases = field(4).parse::<u64>().map_err(|_| ScanError::Parse {
            line,
            message: format!("`cases` is not a nonnegative integer: `{}`", field(4)),
        })?;
        if has_d {
            let d = match field(5) {
                "0" => false,
                "1" => true,
                other => {
                    return Err(ScanError::Parse {
                        line,
                        message: format!("`structural_zero` must be 0 or 1, got `{other}`"),
                    })
                }
            };
            if d && cases > 0 {
                return Err(ScanError::Parse {
                    line,
                    message: format!(
                        "region `{id}` has structural_zero = 1 but {cases} cases; a structural zero cannot carry cases"
                    ),
                });
            }
            flags.push(d);
        }
        regions.push(Region { id, x: real(1, "x")?, y: real(2, "y")?, population });
        counts.push(cases);
    }
    let map = RegionMap::new(regions)?;
    let data = CaseData::new(&map, counts, has_d.then_some(flags))?;
    Ok((map, data))
}

/// Writes a map and its case data in the region-file format.
pub fn write_region_csv<W: std::io::Write>(writer: W, map: &RegionMap, data: &CaseData) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = data.structural_zero();
    let mut header = REQUIRED.to_vec();
    if d.is_some() {
        header.push("structural_zero");
    }
    w.write_record(&header)?;
    for (i, r) in map.regions().iter().enumerate() {
        let mut row = vec![
            r.id.clone(),
            r.x.to_string(),
            r.y.to_string(),
            r.population.to_string(),
            data.counts()[i].to_string(),
        ];
        if let Some(d) = d {
            row.push(if d[i] { "1".into() } else { "0".into() });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
