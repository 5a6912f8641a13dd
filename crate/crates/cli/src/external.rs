//! Surrogates served by a separate process speaking the wire protocol.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use fire_core::{Error, PredictiveSummary, QuantileLevels, Surrogate, SurrogateFactory};
use nalgebra::{DMatrix, DVector};

use crate::wire::{decode_response, encode, Op, Request, Response, WireError};

pub const SIDECAR_ENV: &str = "FIRE_MF_SIDECAR";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, PartialEq)]
pub struct SidecarCommand {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl SidecarCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    /// Program named by the `FIRE_MF_SIDECAR` environment variable.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(SIDECAR_ENV).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn args<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.args = args.into_iter().map(Into::into).collect();
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

/// One running sidecar process.
pub struct SidecarClient {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
    /// Set once the process can no longer be trusted to answer in order.
    broken: bool,
}

impl SidecarClient {
    pub fn spawn(command: &SidecarCommand) -> Result<Self, WireError> {
        let mut child = Command::new(&command.program)
            .args(&command.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| WireError::Spawn {
                program: command.program.display().to_string(),
                source,
            })?;
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            stdin: child.stdin.take(),
            child,
            lines,
            timeout: command.timeout,
            next_id: 0,
            broken: false,
        })
    }

    fn exit_status(&mut self) -> String {
        match self.child.wait_timeout_ms(1000) {
            Some(status) => status,
            None => "no exit status".into(),
        }
    }

    fn call(&mut self, mut request: Request) -> Result<Response, WireError> {
        let op = request.op;
        if self.broken {
            return Err(WireError::Protocol {
                op: op.name(),
                message: "sidecar is unusable after an earlier failure".into(),
            });
        }
        self.next_id += 1;
        request.id = self.next_id;
        let sent = match self.stdin.as_mut() {
            Some(stdin) => writeln!(stdin, "{}", encode(&request)).and_then(|_| stdin.flush()),
            None => Err(std::io::ErrorKind::BrokenPipe.into()),
        };
        let result = match sent {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Err(WireError::Exited {
                op: op.name(),
                status: self.exit_status(),
            }),
            Err(source) => Err(WireError::Io { op: op.name(), source }),
            Ok(()) => self.receive(op, request.id),
        };
        if result.is_err() {
            self.broken = true;
        }
        result
    }

    fn receive(&mut self, op: Op, id: u64) -> Result<Response, WireError> {
        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(source)) => return Err(WireError::Io { op: op.name(), source }),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                return Err(WireError::Timeout {
                    op: op.name(),
                    seconds: self.timeout.as_secs_f64(),
                });
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(WireError::Exited {
                    op: op.name(),
                    status: self.exit_status(),
                })
            }
        };
        let response = decode_response(op, &line)?;
        if response.id != id {
            return Err(WireError::Protocol {
                op: op.name(),
                message: format!("response id {} does not match request id {id}", response.id),
            });
        }
        if !response.ok {
            return Err(WireError::Protocol {
                op: op.name(),
                message: response.error.unwrap_or_else(|| "no error message".into()),
            });
        }
        Ok(response)
    }

    pub fn fit(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(), WireError> {
        self.call(Request {
            id: 0,
            op: Op::Fit,
            x: Some(rows(x)),
            y: Some(y.iter().copied().collect()),
            quantiles: None,
        })
        .map(|_| ())
    }

    pub fn predict(&mut self, x: &DMatrix<f64>, levels: &QuantileLevels) -> Result<PredictiveSummary, WireError> {
        let n = x.nrows();
        let response = self.call(Request {
            id: 0,
            op: Op::Predict,
            x: Some(rows(x)),
            y: None,
            quantiles: Some(levels.as_slice().to_vec()),
        })?;
        let shape = |message: String| WireError::Protocol { op: "predict", message };
        let mean = response.mean.ok_or_else(|| shape("response has no mean".into()))?;
        let variance = response.variance.ok_or_else(|| shape("response has no variance".into()))?;
        let quantiles = response.quantiles.ok_or_else(|| shape("response has no quantiles".into()))?;
        if mean.len() != n || variance.len() != n || quantiles.len() != n {
            return Err(shape(format!(
                "{n} queries but {} means, {} variances, {} quantile rows",
                mean.len(),
                variance.len(),
                quantiles.len()
            )));
        }
        if let Some(row) = quantiles.iter().find(|q| q.len() != levels.len()) {
            return Err(shape(format!("{} quantile levels requested, got {}", levels.len(), row.len())));
        }
        let all = mean.iter().chain(&variance).chain(quantiles.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(shape("non-finite value in response".into()));
        }
        let q = DMatrix::from_fn(n, levels.len(), |i, j| quantiles[i][j]);
        PredictiveSummary::new(DVector::from_vec(mean), DVector::from_vec(variance), q)
            .map_err(|e| shape(e.to_string()))
    }

    /// Asks the sidecar to exit and waits for it.
    pub fn shutdown(mut self) -> Result<(), WireError> {
        let result = self.call(Request {
            id: 0,
            op: Op::Shutdown,
            x: None,
            y: None,
            quantiles: None,
        });
        self.stdin.take();
        let _ = self.child.wait_timeout_ms(self.timeout.as_millis() as u64);
        result.map(|_| ())
    }
}

impl Drop for SidecarClient {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            if !self.broken {
                if let Some(stdin) = self.stdin.as_mut() {
                    let _ = writeln!(stdin, r#"{{"id":0,"op":"shutdown"}}"#).and_then(|_| stdin.flush());
                }
            }
            self.stdin.take();
            if self.child.wait_timeout_ms(1000).is_none() {
                let _ = self.child.kill();
                let _ = self.child.wait();
            }
        }
    }
}

trait WaitTimeout {
    /// Exit status text, or `None` if the child is still running after
    /// `ms` milliseconds.
    fn wait_timeout_ms(&mut self, ms: u64) -> Option<String>;
}

impl WaitTimeout for Child {
    fn wait_timeout_ms(&mut self, ms: u64) -> Option<String> {
        let step = Duration::from_millis(10);
        let mut waited = 0;
        loop {
            match self.try_wait() {
                Ok(Some(status)) => return Some(status.to_string()),
                Ok(None) if waited < ms => {
                    thread::sleep(step);
                    waited += 10;
                }
                Ok(None) => return None,
                Err(e) => return Some(e.to_string()),
            }
        }
    }
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn backend(e: WireError) -> Error {
    Error::Backend(Box::new(e))
}

/// A surrogate fitted inside its own sidecar process.
pub struct ExternalSurrogate {
    dim: usize,
    client: Mutex<SidecarClient>,
}

impl Surrogate for ExternalSurrogate {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &DMatrix<f64>, levels: &QuantileLevels) -> fire_core::Result<PredictiveSummary> {
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.ncols(),
            });
        }
        let mut client = self.client.lock().unwrap_or_else(|p| p.into_inner());
        client.predict(x, levels).map_err(backend)
    }
}

/// Starts one sidecar per fitted surrogate.
#[derive(Debug, Clone)]
pub struct ExternalFactory {
    pub command: SidecarCommand,
}

impl ExternalFactory {
    pub fn new(command: SidecarCommand) -> Self {
        Self { command }
    }
}

impl SurrogateFactory for ExternalFactory {
    fn name(&self) -> &str {
        "external"
    }

    fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>, _seed: u64) -> fire_core::Result<Box<dyn Surrogate>> {
        let mut client = SidecarClient::spawn(&self.command).map_err(backend)?;
        client.fit(x, y).map_err(backend)?;
        Ok(Box::new(ExternalSurrogate {
            dim: x.ncols(),
            client: Mutex::new(client),
        }))
    }
}

/// The wire error behind a core error, if any.
pub fn wire_error(e: &Error) -> Option<&WireError> {
    match e.root() {
        Error::Backend(inner) => inner.downcast_ref::<WireError>(),
        _ => None,
    }
}
