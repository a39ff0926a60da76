//! Parameter sweeps: a template scenario with `{name}` placeholders run over
//! the cross product of a grid.

use crate::report::{clean, RunReport};
use crate::script::{Scenario, ScriptError};
use crate::world::run;

/// `name = v1,v2,...` per line, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut axes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ScriptError::Parse {
                line: i + 1,
                message: format!("grid line `{line}` is not name = values"),
            })?;
            let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            axes.push((k.trim().to_string(), values));
        }
        Ok(Grid { axes })
    }

    /// Every assignment, first axis varying slowest. An empty grid has none.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        if self.axes.is_empty() {
            return Vec::new();
        }
        let mut points = vec![Vec::new()];
        for (name, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p: Vec<(String, String)>| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((name.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

pub fn instantiate(template: &str, point: &[(String, String)]) -> String {
    point
        .iter()
        .fold(template.to_string(), |t, (k, v)| t.replace(&format!("{{{k}}}"), v))
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: Vec<(String, String)>,
    pub report: Result<RunReport, ScriptError>,
}

impl SweepRow {
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_ok_and(RunReport::passed)
    }

    pub fn render(&self, index: usize) -> String {
        let mut fields = vec![format!("index={index}")];
        fields.extend(self.point.iter().map(|(k, v)| format!("{}={}", clean(k), clean(v))));
        match &self.report {
            Ok(r) => {
                fields.push(format!("status={}", if r.passed() { "pass" } else { "fail" }));
                fields.extend(r.metrics.iter().map(|(k, v)| format!("{}={}", clean(k), clean(v))));
            }
            Err(e) => fields.push(format!("status=error\terror={}", clean(&e.to_string()))),
        }
        format!("run\t{}\n", fields.join("\t"))
    }
}

pub fn sweep(template: &str, grid: &Grid) -> Vec<SweepRow> {
    grid.points()
        .into_iter()
        .map(|point| {
            let report = Scenario::parse(&instantiate(template, &point)).map(|s| run(&s));
            SweepRow { point, report }
        })
        .collect()
}

pub fn render_table(rows: &[SweepRow]) -> String {
    rows.iter().enumerate().map(|(i, r)| r.render(i)).collect()
}
