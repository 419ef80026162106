//! Record store, image object store and the flat CSV export.
//!
//! All records live in one [`Tables`] value behind a read/write lock. A write
//! runs with exclusive access and either succeeds completely or leaves the
//! tables untouched (operations check every precondition before mutating), so
//! each write is atomic and every read sees a consistent snapshot. With a data
//! file configured, every successful write is persisted by writing a new file
//! and renaming it over the old one.

pub mod export;
pub mod objects;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::domain::{OrganizationId, Participant, Visit};
use crate::error::{Error, Result};
use crate::grading::GradingRecord;
use crate::ids::{ParticipantId, VisitId};
use crate::reporting::{FollowUp, LetterDispatch};

pub type ParticipantKey = (OrganizationId, ParticipantId);
pub type VisitKey = (OrganizationId, VisitId);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tables {
    pub participants: BTreeMap<ParticipantKey, Participant>,
    /// Last participant id handed out per organization.
    pub last_participant_id: BTreeMap<OrganizationId, ParticipantId>,
    pub visits: BTreeMap<VisitKey, Visit>,
    /// Every grading revision of a visit, oldest first.
    pub gradings: BTreeMap<VisitKey, Vec<GradingRecord>>,
    /// Every letter rendered for a visit; the last one is the active one.
    pub dispatches: BTreeMap<VisitKey, Vec<LetterDispatch>>,
    pub followups: BTreeMap<VisitKey, Vec<FollowUp>>,
}

impl Tables {
    pub fn participant(&self, org: &OrganizationId, pid: ParticipantId) -> Result<&Participant> {
        self.participants
            .get(&(org.clone(), pid))
            .ok_or_else(|| Error::UnknownParticipant(pid.to_string()))
    }

    pub fn visit(&self, org: &OrganizationId, vid: VisitId) -> Result<&Visit> {
        self.visits
            .get(&(org.clone(), vid))
            .ok_or_else(|| Error::UnknownVisit(vid.to_string()))
    }

    pub fn visit_mut(&mut self, org: &OrganizationId, vid: VisitId) -> Result<&mut Visit> {
        self.visits
            .get_mut(&(org.clone(), vid))
            .ok_or_else(|| Error::UnknownVisit(vid.to_string()))
    }

    pub fn visits_of<'a>(
        &'a self,
        org: &'a OrganizationId,
        pid: ParticipantId,
    ) -> impl Iterator<Item = &'a Visit> + 'a {
        let first = VisitId::new(pid, 1).expect("1 is a valid sequence");
        self.visits
            .range((org.clone(), first)..)
            .take_while(move |((o, v), _)| o == org && v.participant() == pid)
            .map(|(_, v)| v)
    }

    pub fn latest_grading(&self, key: &VisitKey) -> Option<&GradingRecord> {
        self.gradings.get(key).and_then(|g| g.last())
    }

    /// Checks referential integrity: every visit has its participant, every
    /// grading, dispatch and follow-up has its visit.
    pub fn check_integrity(&self) -> Result<()> {
        for ((org, vid), visit) in &self.visits {
            if visit.visit_id != *vid || &visit.organization_id != org || visit.participant_id != vid.participant() {
                return Err(Error::Internal(format!("visit {vid} stored under the wrong key")));
            }
            self.participant(org, vid.participant())?;
        }
        let keys = self
            .gradings
            .keys()
            .chain(self.dispatches.keys())
            .chain(self.followups.keys());
        for (org, vid) in keys {
            self.visit(org, *vid)?;
        }
        Ok(())
    }

    fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            participants: self.participants.values().cloned().collect(),
            counters: self
                .last_participant_id
                .iter()
                .map(|(org, pid)| (org.to_string(), *pid))
                .collect(),
            visits: self.visits.values().cloned().collect(),
            gradings: self
                .gradings
                .iter()
                .map(|((org, _), g)| (org.clone(), g.clone()))
                .collect(),
            dispatches: self
                .dispatches
                .iter()
                .map(|((org, _), d)| (org.clone(), d.clone()))
                .collect(),
            followups: self
                .followups
                .iter()
                .map(|((org, _), f)| (org.clone(), f.clone()))
                .collect(),
        }
    }

    fn from_snapshot(snapshot: Snapshot) -> Result<Self> {
        let mut tables = Tables::default();
        for p in snapshot.participants {
            tables
                .participants
                .insert((p.organization_id.clone(), p.participant_id), p);
        }
        for (org, pid) in snapshot.counters {
            tables.last_participant_id.insert(OrganizationId::new(org)?, pid);
        }
        for v in snapshot.visits {
            tables.visits.insert((v.organization_id.clone(), v.visit_id), v);
        }
        let keyed = |org: OrganizationId, vid: Option<VisitId>| {
            vid.map(|v| (org, v))
                .ok_or_else(|| Error::Internal("empty record list in data file".into()))
        };
        for (org, g) in snapshot.gradings {
            let key = keyed(org, g.first().map(|r| r.visit_id))?;
            tables.gradings.insert(key, g);
        }
        for (org, d) in snapshot.dispatches {
            let key = keyed(org, d.first().map(|r| r.visit_id))?;
            tables.dispatches.insert(key, d);
        }
        for (org, f) in snapshot.followups {
            let key = keyed(org, f.first().map(|r| r.visit_id))?;
            tables.followups.insert(key, f);
        }
        tables.check_integrity()?;
        Ok(tables)
    }
}

/// On-disk form of [`Tables`].
#[derive(Serialize, Deserialize)]
struct Snapshot {
    participants: Vec<Participant>,
    counters: BTreeMap<String, ParticipantId>,
    visits: Vec<Visit>,
    gradings: Vec<(OrganizationId, Vec<GradingRecord>)>,
    dispatches: Vec<(OrganizationId, Vec<LetterDispatch>)>,
    followups: Vec<(OrganizationId, Vec<FollowUp>)>,
}

#[derive(Debug, Default)]
pub struct Store {
    tables: RwLock<Tables>,
    data_file: Option<PathBuf>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a store persisted to `path`.
    pub fn open(path: &Path) -> Result<Self> {
        let tables = match std::fs::read(path) {
            Ok(bytes) => {
                let snapshot: Snapshot = serde_json::from_slice(&bytes)
                    .map_err(|e| Error::BackendUnavailable(format!("corrupt data file {}: {e}", path.display())))?;
                Tables::from_snapshot(snapshot)?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Tables::default(),
            Err(e) => {
                return Err(Error::BackendUnavailable(format!(
                    "cannot read {}: {e}",
                    path.display()
                )))
            }
        };
        let store = Self {
            tables: RwLock::new(tables),
            data_file: Some(path.to_path_buf()),
        };
        // Fail at startup, not on the first write, if the location is unusable.
        store.persist(&store.tables.read().unwrap_or_else(|p| p.into_inner()))?;
        Ok(store)
    }

    pub fn read<T>(&self, f: impl FnOnce(&Tables) -> T) -> T {
        f(&self.tables.read().unwrap_or_else(|p| p.into_inner()))
    }

    /// Runs `f` with exclusive access. `f` must not mutate anything before it
    /// has checked all its preconditions.
    pub fn write<T>(&self, f: impl FnOnce(&mut Tables) -> Result<T>) -> Result<T> {
        let mut tables = self.tables.write().unwrap_or_else(|p| p.into_inner());
        let out = f(&mut tables)?;
        self.persist(&tables)?;
        Ok(out)
    }

    fn persist(&self, tables: &Tables) -> Result<()> {
        let Some(path) = &self.data_file else {
            return Ok(());
        };
        let unavailable =
            |e: std::io::Error| Error::BackendUnavailable(format!("cannot write {}: {e}", path.display()));
        let bytes = serde_json::to_vec(&tables.to_snapshot()).map_err(|e| Error::Internal(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(unavailable)?;
        std::fs::rename(&tmp, path).map_err(unavailable)?;
        Ok(())
    }
}
