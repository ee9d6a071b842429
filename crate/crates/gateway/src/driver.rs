//! The one thread that owns the system. HTTP handlers hand it closures and
//! wait for the answer; nothing else touches agent state.

use std::path::PathBuf;
use std::sync::mpsc;

use careflow_core::bus::Performative;
use careflow_core::content::Msg;
use careflow_core::system::{System, SystemConfig, SystemError};
use careflow_core::wfms::{AgentManager, WfmcMsg};
use tokio::sync::oneshot;

pub struct Engine {
    pub sys: System,
    snapshot_path: Option<PathBuf>,
}

impl Engine {
    /// Writes the snapshot after a state change, when persistence is on.
    pub fn commit(&mut self) -> Result<(), SystemError> {
        if let Some(path) = &self.snapshot_path {
            self.sys.save_snapshot(path)?;
        }
        Ok(())
    }
}

type Job = Box<dyn FnOnce(&mut Engine) + Send>;

#[derive(Clone)]
pub struct Driver {
    jobs: mpsc::Sender<Job>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("{0}: {1}")]
    Process(PathBuf, String),
    #[error("scheduler thread died during start-up")]
    Died,
}

#[derive(Debug, thiserror::Error)]
#[error("scheduler thread is gone")]
pub struct Gone;

impl Driver {
    /// Restores from the snapshot when one exists, otherwise starts fresh and
    /// loads `processes`.
    pub fn start(config: SystemConfig, snapshot_path: Option<PathBuf>, processes: Vec<PathBuf>) -> Result<Self, StartError> {
        let (jobs, rx) = mpsc::channel::<Job>();
        let (ready_tx, ready_rx) = mpsc::channel();
        std::thread::Builder::new()
            .name("careflow-scheduler".into())
            .spawn(move || {
                let engine = boot(config, snapshot_path, &processes);
                let mut engine = match engine {
                    Ok(e) => {
                        let _ = ready_tx.send(Ok(()));
                        e
                    }
                    Err(e) => {
                        let _ = ready_tx.send(Err(e));
                        return;
                    }
                };
                while let Ok(job) = rx.recv() {
                    job(&mut engine);
                }
            })
            .map_err(|_| StartError::Died)?;
        ready_rx.recv().map_err(|_| StartError::Died)??;
        Ok(Self { jobs })
    }

    pub async fn run<R: Send + 'static>(&self, f: impl FnOnce(&mut Engine) -> R + Send + 'static) -> Result<R, Gone> {
        let (tx, rx) = oneshot::channel();
        let job: Job = Box::new(move |engine| {
            let _ = tx.send(f(engine));
        });
        self.jobs.send(job).map_err(|_| Gone)?;
        rx.await.map_err(|_| Gone)
    }
}

fn boot(config: SystemConfig, snapshot_path: Option<PathBuf>, processes: &[PathBuf]) -> Result<Engine, StartError> {
    if let Some(path) = snapshot_path.as_ref().filter(|p| p.exists()) {
        let sys = System::load_snapshot(config, path)?;
        return Ok(Engine { sys, snapshot_path });
    }
    let mut engine = Engine {
        sys: System::new(config)?,
        snapshot_path,
    };
    for path in processes {
        let xml = std::fs::read_to_string(path).map_err(|e| StartError::Process(path.clone(), e.to_string()))?;
        let reply: Msg = engine.sys.call(AgentManager::id(), Performative::Request, WfmcMsg::LoadDefinition { xml }.into())?;
        if let Some((code, detail)) = careflow_core::system::reply_error(&reply) {
            return Err(StartError::Process(path.clone(), format!("{code}: {detail}")));
        }
    }
    engine.commit()?;
    Ok(engine)
}
