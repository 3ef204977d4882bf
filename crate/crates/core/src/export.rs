//! CSV artifacts. Every file starts with a `# config_hash=<hex>` comment line
//! followed by a header row; numbers use the shortest round-trip form so
//! identical runs give identical bytes.

use std::io::Write;

use thiserror::Error;

use crate::dispersion::{EtaCurve, EtaFamily};
use crate::langevin::{MsdCurve, TrajectoryEnsemble};
use crate::model::{DensityField, FlowState, PhysicalConfig, WaveFunction};
use crate::smoluchowski::Snapshot;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row has {got} fields, header has {expected}")]
    RowWidth { expected: usize, got: usize },
}

pub type ExportResult<T> = std::result::Result<T, ExportError>;

pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
    width: usize,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W, config_hash: &str, header: &[&str]) -> ExportResult<Self> {
        writeln!(out, "# config_hash={config_hash}")?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        inner.write_record(header)?;
        Ok(Self {
            inner,
            width: header.len(),
        })
    }

    pub fn row(&mut self, values: &[f64]) -> ExportResult<()> {
        self.check(values.len())?;
        self.inner.write_record(values.iter().map(|v| v.to_string()))?;
        Ok(())
    }

    /// Row of preformatted fields, for tables with text or empty cells.
    pub fn text_row<S: AsRef<str>>(&mut self, fields: &[S]) -> ExportResult<()> {
        self.check(fields.len())?;
        self.inner.write_record(fields.iter().map(|f| f.as_ref()))?;
        Ok(())
    }

    pub fn finish(self) -> ExportResult<W> {
        self.inner.into_inner().map_err(|e| ExportError::Io(e.into_error()))
    }

    fn check(&self, got: usize) -> ExportResult<()> {
        if got != self.width {
            return Err(ExportError::RowWidth {
                expected: self.width,
                got,
            });
        }
        Ok(())
    }
}

/// `path,step,t,x,p`; `p` is empty for velocity-noise ensembles.
pub fn write_ensemble<W: Write>(out: W, hash: &str, ens: &TrajectoryEnsemble) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["path", "step", "t", "x", "p"])?;
    for (i, xs) in ens.positions.iter().enumerate() {
        for (k, x) in xs.iter().enumerate() {
            let p = ens.momenta.as_ref().map_or(String::new(), |m| m[i][k].to_string());
            sink.text_row(&[
                i.to_string(),
                ens.steps[k].to_string(),
                ens.times[k].to_string(),
                x.to_string(),
                p,
            ])?;
        }
    }
    sink.finish()
}

/// `t,msd,variance`.
pub fn write_msd<W: Write>(out: W, hash: &str, msd: &MsdCurve) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["t", "msd", "variance"])?;
    for k in 0..msd.times.len() {
        sink.row(&[msd.times[k], msd.msd[k], msd.variance[k]])?;
    }
    sink.finish()
}

/// `t,x,rho`.
pub fn write_density_snapshots<W: Write>(out: W, hash: &str, snaps: &[Snapshot]) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["t", "x", "rho"])?;
    for s in snaps {
        for (x, r) in s.density.grid().points().into_iter().zip(s.density.values()) {
            sink.row(&[s.t, x, *r])?;
        }
    }
    sink.finish()
}

/// `t,x,re_psi,im_psi,rho`.
pub fn write_wave_snapshots<W: Write>(out: W, hash: &str, snaps: &[(f64, WaveFunction)]) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["t", "x", "re_psi", "im_psi", "rho"])?;
    for (t, psi) in snaps {
        for (x, z) in psi.grid().points().into_iter().zip(psi.values()) {
            sink.row(&[*t, x, z.re, z.im, z.norm_sqr()])?;
        }
    }
    sink.finish()
}

/// `t,x,rho,v`.
pub fn write_flow_snapshots<W: Write>(out: W, hash: &str, snaps: &[(f64, FlowState)]) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["t", "x", "rho", "v"])?;
    for (t, flow) in snaps {
        let rho = flow.density.values();
        for (i, x) in flow.grid().points().into_iter().enumerate() {
            sink.row(&[*t, x, rho[i], flow.velocity[i]])?;
        }
    }
    sink.finish()
}

/// `n,E_n`.
pub fn write_spectrum<W: Write>(out: W, hash: &str, energies: &[f64]) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["n", "E_n"])?;
    for (n, e) in energies.iter().enumerate() {
        sink.text_row(&[n.to_string(), e.to_string()])?;
    }
    sink.finish()
}

/// `x,rho_eq`.
pub fn write_equilibrium_density<W: Write>(out: W, hash: &str, rho: &DensityField) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["x", "rho_eq"])?;
    for (x, r) in rho.grid().points().into_iter().zip(rho.values()) {
        sink.row(&[x, *r])?;
    }
    sink.finish()
}

/// `t,beta,eta,sigma` for independent curves, one block per curve.
pub fn write_eta_curves<W: Write>(out: W, hash: &str, curves: &[EtaCurve], cfg: &PhysicalConfig) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["t", "beta", "eta", "sigma"])?;
    for c in curves {
        for (t, eta) in c.times.iter().zip(&c.eta) {
            sink.row(&[*t, c.beta, *eta, eta / cfg.mass])?;
        }
    }
    sink.finish()
}

/// `t,beta,eta,sigma` for a coupled family, row-major in time.
pub fn write_eta_family<W: Write>(out: W, hash: &str, family: &EtaFamily, cfg: &PhysicalConfig) -> ExportResult<W> {
    let mut sink = CsvSink::new(out, hash, &["t", "beta", "eta", "sigma"])?;
    for (i, t) in family.times.iter().enumerate() {
        for (j, beta) in family.beta_grid.iter().enumerate() {
            sink.row(&[*t, *beta, family.eta[i][j], family.sigma(i, j, cfg)])?;
        }
    }
    sink.finish()
}
