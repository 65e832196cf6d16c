//! Worker processes for the socket backend.
//!
//! The coordinator writes a job file, reserves one loopback port per rank
//! and starts `<exe> worker --job <file> --rank <r> --result <file>` for
//! every rank. Each worker rebuilds the run context from the job, connects
//! to its peers and writes its [`RankResult`] as TOML.

use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{collect_results, run_rank, RankResult, RunConfig, RunContext, TimePlan};
use crate::error::{Error, Result};
use crate::partition::{Endpoint, SocketBackend};

/// Overrides the executable started for each worker; defaults to the
/// current executable.
pub const WORKER_EXE_ENV: &str = "SLIDEMESH_WORKER_EXE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerJob {
    pub plan: TimePlan,
    pub addrs: Vec<String>,
    pub config: RunConfig,
}

fn parse_addrs(addrs: &[String]) -> Result<Vec<SocketAddr>> {
    addrs
        .iter()
        .map(|a| {
            a.parse()
                .map_err(|_| Error::Config(format!("bad worker address '{a}'")))
        })
        .collect()
}

fn bind_retrying(addr: SocketAddr) -> Result<TcpListener> {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        match TcpListener::bind(addr) {
            Ok(l) => return Ok(l),
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => return Err(Error::Transport(format!("cannot listen on {addr}: {e}"))),
        }
    }
}

/// Entry point of a worker process.
pub fn worker_main(job_path: &Path, rank: usize, result_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(job_path)?;
    let job: WorkerJob = toml::from_str(&text).map_err(|e| Error::Config(format!("job file: {e}")))?;
    let addrs = parse_addrs(&job.addrs)?;
    if rank >= addrs.len() || addrs.len() != job.config.parallel.ranks {
        return Err(Error::Config(format!("rank {rank} outside the job's {} ranks", addrs.len())));
    }
    let ctx = RunContext::new(&job.config)?;
    let listener = bind_retrying(addrs[rank])?;
    let backend = SocketBackend::connect(rank, &addrs, listener)?;
    let result = run_rank(&ctx, job.plan, Endpoint::new(Box::new(backend)))?;
    let text = toml::to_string(&result).map_err(|e| Error::Internal(format!("result encoding: {e}")))?;
    let tmp = result_path.with_extension("partial");
    std::fs::write(&tmp, text)?;
    std::fs::rename(tmp, result_path)?;
    Ok(())
}

fn worker_exe() -> Result<PathBuf> {
    match std::env::var_os(WORKER_EXE_ENV) {
        Some(p) => Ok(PathBuf::from(p)),
        None => Ok(std::env::current_exe()?),
    }
}

/// Scratch directory removed on drop.
struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new() -> Result<Self> {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        let dir = std::env::temp_dir().join(format!("slidemesh-{}-{stamp}", std::process::id()));
        std::fs::create_dir_all(&dir)?;
        Ok(Self(dir))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

pub(crate) fn run_processes(ctx: &RunContext, plan: TimePlan) -> Result<Vec<RankResult>> {
    let n = ctx.config.parallel.ranks;
    let exe = worker_exe()?;
    let scratch = ScratchDir::new()?;
    // reserve ports; the workers bind them again right away
    let addrs: Vec<String> = {
        let listeners = (0..n)
            .map(|_| TcpListener::bind("127.0.0.1:0"))
            .collect::<std::io::Result<Vec<_>>>()?;
        listeners
            .iter()
            .map(|l| l.local_addr().map(|a| a.to_string()))
            .collect::<std::io::Result<_>>()?
    };
    let job = WorkerJob {
        plan,
        addrs,
        config: ctx.config.clone(),
    };
    let job_path = scratch.0.join("job.toml");
    std::fs::write(
        &job_path,
        toml::to_string(&job).map_err(|e| Error::Internal(format!("job encoding: {e}")))?,
    )?;

    let mut children = Vec::with_capacity(n);
    for rank in 0..n {
        let child = Command::new(&exe)
            .arg("worker")
            .arg("--job")
            .arg(&job_path)
            .arg("--rank")
            .arg(rank.to_string())
            .arg("--result")
            .arg(scratch.0.join(format!("rank{rank}.toml")))
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start worker {}: {e}", exe.display())))?;
        children.push(child);
    }
    let results = children
        .into_iter()
        .enumerate()
        .map(|(rank, child)| {
            let out = child.wait_with_output()?;
            let fail = |msg: String| Error::Rank {
                rank,
                source: Box::new(msg_to_error(msg)),
            };
            if !out.status.success() {
                let stderr = String::from_utf8_lossy(&out.stderr);
                let msg = stderr.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("no output");
                return Err(fail(format!("worker exited with {}: {msg}", out.status)));
            }
            let text = std::fs::read_to_string(scratch.0.join(format!("rank{rank}.toml")))?;
            toml::from_str::<RankResult>(&text).map_err(|e| fail(format!("unreadable result: {e}")))
        })
        .collect();
    collect_results(results)
}

/// Failures whose message shows a peer vanished rank as secondary.
fn msg_to_error(msg: String) -> Error {
    if msg.contains("transport error") {
        Error::Transport(msg)
    } else {
        Error::Internal(msg)
    }
}
