//! Long-format panel CSV: header `id,time,y,x1[,x2,…]`, one row per
//! individual and period.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::{Individual, Panel};

/// Reads a panel; rows may come in any order. Individuals keep the order of
/// their first appearance and are sorted by time internally.
pub fn read_panel<R: Read>(reader: R) -> Result<Panel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let k = check_header(&headers)?;

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(i64, f64, Vec<f64>)>> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        if rec.len() != headers.len() {
            return Err(Error::Csv(format!("line {row}: expected {} fields, found {}", headers.len(), rec.len())));
        }
        let field = |c: usize| -> Result<&str> {
            let v = &rec[c];
            if v.is_empty() {
                Err(Error::Csv(format!("line {row}: missing value in column '{}'", headers[c])))
            } else {
                Ok(v)
            }
        };
        let id = field(0)?.to_string();
        let time: i64 = field(1)?
            .parse()
            .map_err(|_| Error::Csv(format!("line {row}: time '{}' is not an integer", &rec[1])))?;
        let num = |c: usize| -> Result<f64> {
            let s = field(c)?;
            s.parse::<f64>()
                .map_err(|_| Error::Csv(format!("line {row}: '{s}' in column '{}' is not a number", headers[c])))
        };
        let y = num(2)?;
        let xs = (0..k).map(|j| num(3 + j)).collect::<Result<Vec<_>>>()?;
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id).or_default().push((time, y, xs));
    }

    let mut individuals = Vec::with_capacity(order.len());
    for id in order {
        let mut obs = rows.remove(&id).expect("id recorded");
        obs.sort_by_key(|o| o.0);
        if let Some(w) = obs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidIndividual {
                id,
                reason: format!("duplicate time {}", w[0].0),
            });
        }
        let times = obs.iter().map(|o| o.0).collect();
        let y = obs.iter().map(|o| o.1).collect();
        let x = (0..k).map(|j| obs.iter().map(|o| o.2[j]).collect()).collect();
        individuals.push(Individual::new(id, times, x, y)?);
    }
    Panel::new(individuals)
}

fn check_header(headers: &[String]) -> Result<usize> {
    if headers.len() < 4 || headers[0] != "id" || headers[1] != "time" || headers[2] != "y" {
        return Err(Error::Csv(format!(
            "header must be id,time,y,x1[,x2,...], found {}",
            headers.join(",")
        )));
    }
    for (j, h) in headers[3..].iter().enumerate() {
        if *h != format!("x{}", j + 1) {
            return Err(Error::Csv(format!("regressor column {} must be named x{}, found '{h}'", j + 1, j + 1)));
        }
    }
    Ok(headers.len() - 3)
}

pub fn read_panel_path(path: &Path) -> Result<Panel> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_panel(std::io::BufReader::new(file))
}

/// Writes the panel in long format with full round-trip precision.
pub fn write_panel<W: Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "time".into(), "y".into()];
    header.extend((1..=panel.k()).map(|j| format!("x{j}")));
    wtr.write_record(&header)?;
    for ind in panel.individuals() {
        for (t, &time) in ind.times().iter().enumerate() {
            let mut rec = vec![ind.id().to_string(), time.to_string(), format!("{:?}", ind.y()[t])];
            rec.extend((0..panel.k()).map(|j| format!("{:?}", ind.x(j)[t])));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_panel_path(panel: &Panel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_panel(panel, std::io::BufWriter::new(file))
}
