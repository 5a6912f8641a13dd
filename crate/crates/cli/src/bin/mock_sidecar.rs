//! Reference sidecar for protocol tests: serves a constant predictor or an
//! in-process GP, and can misbehave on demand.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use fire_core::gp::FittedGp;
use fire_core::{GpFactory, PredictiveSummary, QuantileLevels};
use fire_mf::wire::{encode, Op, Request, Response};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Constant,
    Gp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    None,
    /// Answer with a line that is not JSON.
    Malformed,
    /// Never answer.
    Hang,
    /// Exit with status 3 without answering.
    Exit,
    /// Echo the wrong request id.
    BadId,
    /// Return one prediction fewer than requested.
    Short,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FaultOp {
    Fit,
    Predict,
}

#[derive(Debug, Parser)]
struct Args {
    #[arg(long, value_enum, default_value_t = Mode::Constant)]
    mode: Mode,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, value_enum, default_value_t = Fault::None)]
    fault: Fault,
    #[arg(long, value_enum, default_value_t = FaultOp::Predict)]
    fault_on: FaultOp,
    /// Requests of the faulty kind answered normally before the fault.
    #[arg(long, default_value_t = 0)]
    fault_after: usize,
}

enum Fitted {
    Constant,
    Gp(FittedGp),
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err("ragged x".into());
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

struct Server {
    args: Args,
    fitted: Option<Fitted>,
    seen: usize,
}

impl Server {
    fn fit(&mut self, req: &Request) -> Result<Response, String> {
        let x = matrix(req.x.as_deref().ok_or("fit needs x")?)?;
        let y = DVector::from_vec(req.y.clone().ok_or("fit needs y")?);
        if x.nrows() != y.len() || y.is_empty() {
            return Err(format!("{} rows of x for {} targets", x.nrows(), y.len()));
        }
        self.fitted = Some(match self.args.mode {
            Mode::Constant => Fitted::Constant,
            Mode::Gp => Fitted::Gp(GpFactory::default().fit_gp(&x, &y, 0).map_err(|e| e.to_string())?),
        });
        Ok(Response::ok(req.id))
    }

    fn predict(&self, req: &Request) -> Result<Response, String> {
        let fitted = self.fitted.as_ref().ok_or("predict before fit")?;
        let x = matrix(req.x.as_deref().ok_or("predict needs x")?)?;
        let levels = QuantileLevels::new(req.quantiles.clone().unwrap_or_default()).map_err(|e| e.to_string())?;
        let n = x.nrows();
        let (mean, variance) = match fitted {
            Fitted::Constant => (DVector::from_element(n, self.args.mean), DVector::from_element(n, self.args.variance)),
            Fitted::Gp(gp) => gp.predict_mean_variance(&x).map_err(|e| e.to_string())?,
        };
        let s = PredictiveSummary::gaussian(mean, variance, &levels);
        let mut resp = Response::ok(req.id);
        resp.mean = Some(s.mean().iter().copied().collect());
        resp.variance = Some(s.variance().iter().copied().collect());
        resp.quantiles = Some(s.quantiles().row_iter().map(|r| r.iter().copied().collect()).collect());
        Ok(resp)
    }
}

fn main() -> ExitCode {
    let mut server = Server {
        args: Args::parse(),
        fitted: None,
        seen: 0,
    };
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { return ExitCode::FAILURE };
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let _ = writeln!(out, "{}", encode(&Response::failure(0, format!("bad request: {e}"))));
                let _ = out.flush();
                continue;
            }
        };
        if req.op == Op::Shutdown {
            let _ = writeln!(out, "{}", encode(&Response::ok(req.id)));
            let _ = out.flush();
            return ExitCode::SUCCESS;
        }

        let faulty = server.args.fault != Fault::None
            && matches!(
                (server.args.fault_on, req.op),
                (FaultOp::Fit, Op::Fit) | (FaultOp::Predict, Op::Predict)
            );
        let trigger = faulty && {
            server.seen += 1;
            server.seen > server.args.fault_after
        };
        if trigger {
            match server.args.fault {
                Fault::Malformed => {
                    let _ = writeln!(out, "<html>not a wire message</html>");
                    let _ = out.flush();
                    continue;
                }
                Fault::Hang => loop {
                    std::thread::sleep(Duration::from_secs(3600));
                },
                Fault::Exit => return ExitCode::from(3),
                _ => {}
            }
        }

        let result = match req.op {
            Op::Fit => server.fit(&req),
            Op::Predict => server.predict(&req),
            Op::Shutdown => unreachable!(),
        };
        let mut resp = result.unwrap_or_else(|e| Response::failure(req.id, e));
        if trigger {
            match server.args.fault {
                Fault::BadId => resp.id += 1000,
                Fault::Short => {
                    for v in [&mut resp.mean, &mut resp.variance].into_iter().flatten() {
                        v.pop();
                    }
                    if let Some(q) = resp.quantiles.as_mut() {
                        q.pop();
                    }
                }
                _ => {}
            }
        }
        if writeln!(out, "{}", encode(&resp)).and_then(|_| out.flush()).is_err() {
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
