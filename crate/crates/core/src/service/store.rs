use super::{
    parse_choice, Ack, Directive, Event, EventBody, ObserverPhase, ObserverRecord, ObserverState, Outstanding, Presentation,
    Result, ServiceError, StudyOptions, StudyState,
};
use crate::study::{Phase, Response, StudyManifest, Triplet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
const MANIFEST_FILE: &str = "manifest.json";
const META_FILE: &str = "study.json";

/// Test hook: simulate a process crash at a chosen point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailPoint {
    /// The response is on disk but neither applied nor acknowledged.
    AfterDurableWrite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    study_id: String,
    assets_dir: PathBuf,
    options: StudyOptions,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hash of a manifest; equal manifests share an id.
pub fn study_id_of(manifest: &StudyManifest) -> Result<String> {
    Ok(hex_digest(&serde_json::to_vec(manifest)?)[..16].to_string())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses complete lines of the log. A final line without its newline is a
/// torn write and is dropped (its byte offset is returned so it can be cut).
fn read_events(path: &Path) -> Result<(Vec<Event>, u64)> {
    let mut events = Vec::new();
    let mut good = 0u64;
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut n = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        n += 1;
        if !line.ends_with('\n') {
            break;
        }
        let event: Event = serde_json::from_str(line.trim_end()).map_err(|e| ServiceError::CorruptLog {
            line: n,
            message: e.to_string(),
        })?;
        events.push(event);
        good += read as u64;
    }
    Ok((events, good))
}

fn safe_relative(rel: &str) -> Option<PathBuf> {
    let p = Path::new(rel);
    p.components().all(|c| matches!(c, Component::Normal(_))).then(|| p.to_path_buf())
}

/// One study: manifest, options and the state rebuilt from its log.
#[derive(Debug)]
pub struct Study {
    pub id: String,
    dir: PathBuf,
    pub manifest: StudyManifest,
    pub options: StudyOptions,
    pub assets_dir: PathBuf,
    state: StudyState,
    log: File,
    since_snapshot: usize,
    fail: Option<FailPoint>,
}

impl Study {
    fn create(root: &Path, manifest: StudyManifest, assets_dir: &Path, options: StudyOptions) -> Result<Study> {
        if manifest.triplets.is_empty() {
            return Err(ServiceError::EmptyManifest("triplets"));
        }
        if manifest.sessions.is_empty() {
            return Err(ServiceError::EmptyManifest("sessions"));
        }
        for t in manifest.triplets.iter().chain(&manifest.training) {
            for s in [&t.reference, &t.left, &t.right] {
                let ok = safe_relative(&s.image).map(|p| assets_dir.join(p).is_file()).unwrap_or(false);
                if !ok {
                    return Err(ServiceError::DanglingAsset(s.image.clone()));
                }
            }
        }
        let id = study_id_of(&manifest)?;
        let dir = root.join(&id);
        if dir.join(META_FILE).exists() {
            let existing = Study::open(&dir)?;
            if existing.manifest != manifest {
                return Err(ServiceError::Conflict(dir.display().to_string()));
            }
            return Ok(existing);
        }
        std::fs::create_dir_all(&dir)?;
        let meta = Meta {
            study_id: id.clone(),
            assets_dir: std::fs::canonicalize(assets_dir)?,
            options,
        };
        write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec(&manifest)?)?;
        File::create(dir.join(EVENTS_FILE))?.sync_all()?;
        // the meta file marks the study as complete
        write_atomic(&dir.join(META_FILE), &serde_json::to_vec_pretty(&meta)?)?;
        Study::open(&dir)
    }

    /// Loads the snapshot, if any, and replays the log after it.
    pub fn open(dir: &Path) -> Result<Study> {
        let meta: Meta = serde_json::from_slice(&std::fs::read(dir.join(META_FILE))?)?;
        let manifest: StudyManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
        let events_path = dir.join(EVENTS_FILE);
        let mut state = match std::fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => StudyState {
                study_id: meta.study_id.clone(),
                ..StudyState::default()
            },
            Err(e) => return Err(e.into()),
        };
        let (events, good) = read_events(&events_path)?;
        let mut replayed = 0;
        let applied = state.events;
        for e in events.iter().filter(|e| e.seq > applied) {
            apply(&mut state, &manifest, e);
            replayed += 1;
        }
        let log = OpenOptions::new().append(true).open(&events_path)?;
        if log.metadata()?.len() > good {
            log.set_len(good)?;
            log.sync_all()?;
        }
        Ok(Study {
            id: meta.study_id,
            dir: dir.to_path_buf(),
            manifest,
            options: meta.options,
            assets_dir: meta.assets_dir,
            state,
            log,
            since_snapshot: replayed,
            fail: None,
        })
    }

    /// State rebuilt from the log alone, ignoring any snapshot.
    pub fn replay(dir: &Path) -> Result<StudyState> {
        let meta: Meta = serde_json::from_slice(&std::fs::read(dir.join(META_FILE))?)?;
        let manifest: StudyManifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST_FILE))?)?;
        let mut state = StudyState {
            study_id: meta.study_id,
            ..StudyState::default()
        };
        for e in read_events(&dir.join(EVENTS_FILE))?.0 {
            apply(&mut state, &manifest, &e);
        }
        Ok(state)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &StudyState {
        &self.state
    }

    pub fn inject(&mut self, fail: Option<FailPoint>) {
        self.fail = fail;
    }

    fn commit(&mut self, body: EventBody) -> Result<()> {
        let event = Event {
            seq: self.state.events + 1,
            at_ms: now_ms(),
            body,
        };
        let mut line = serde_json::to_vec(&event)?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        if matches!(event.body, EventBody::Responded { .. }) && self.fail.take() == Some(FailPoint::AfterDurableWrite) {
            return Err(ServiceError::InjectedCrash);
        }
        apply(&mut self.state, &self.manifest, &event);
        self.since_snapshot += 1;
        if self.since_snapshot >= self.options.snapshot_every.max(1) {
            self.snapshot()?;
        }
        Ok(())
    }

    pub fn snapshot(&mut self) -> Result<()> {
        write_atomic(&self.dir.join(SNAPSHOT_FILE), &serde_json::to_vec(&self.state)?)?;
        self.since_snapshot = 0;
        Ok(())
    }

    fn observer(&self, observer: &str) -> Result<&ObserverState> {
        if self.manifest.session(observer).is_none() {
            return Err(ServiceError::UnknownObserver(observer.to_string()));
        }
        self.state.observers.get(observer).ok_or_else(|| ServiceError::OutOfPhase {
            observer: observer.to_string(),
            phase: ObserverPhase::Screening,
        })
    }

    pub fn register(&mut self, record: ObserverRecord) -> Result<ObserverState> {
        if self.manifest.session(&record.observer_id).is_none() {
            return Err(ServiceError::UnknownObserver(record.observer_id));
        }
        // screening results may be corrected until the observer is cleared
        if let Some(existing) = self.state.observers.get(&record.observer_id) {
            if existing.record == record {
                return Ok(existing.clone());
            }
            if existing.phase != ObserverPhase::Screening {
                return Err(ServiceError::AlreadyRegistered(record.observer_id));
            }
        }
        let id = record.observer_id.clone();
        self.commit(EventBody::Registered { record })?;
        Ok(self.state.observers[&id].clone())
    }

    fn completion_code(&self, observer: &str) -> String {
        hex_digest(format!("{}/{observer}", self.id).as_bytes())[..8].to_ascii_uppercase()
    }

    fn find_triplet(&self, id: &str) -> &Triplet {
        self.manifest.triplet(id).expect("served items come from the manifest")
    }

    fn present(&self, observer: &str, item: &Outstanding) -> Presentation {
        let t = self.find_triplet(&item.triplet_id);
        let st = &self.state.observers[observer];
        let (index, total) = match item.phase {
            Phase::Training => (st.training_cursor, self.manifest.training.len()),
            Phase::Testing => (st.cursor, self.manifest.session(observer).map_or(0, |s| s.items.len())),
        };
        let url = |image: &str| format!("/assets/{}/{image}", self.id);
        let (left, right) = if item.swapped { (&t.right, &t.left) } else { (&t.left, &t.right) };
        Presentation {
            triplet_id: t.id.clone(),
            phase: item.phase,
            index,
            total,
            reference: url(&t.reference.image),
            left: url(&left.image),
            right: url(&right.image),
            flicker_ms: self.options.flicker_ms,
            swapped: item.swapped,
            zoom: self.options.zoom,
        }
    }

    fn break_remaining(&self, st: &ObserverState) -> u64 {
        let elapsed = st.break_started_ms.map(|t| now_ms().saturating_sub(t)).unwrap_or(0);
        (self.options.min_break_s * 1000).saturating_sub(elapsed).div_ceil(1000)
    }

    /// Serves the next scheduled item, the break directive or completion.
    pub fn next(&mut self, observer: &str) -> Result<Directive> {
        let st = self.observer(observer)?.clone();
        if st.outstanding.is_some() {
            return Err(ServiceError::Outstanding(observer.to_string()));
        }
        let session = self.manifest.session(observer).expect("checked by observer()");
        let item = match st.phase {
            ObserverPhase::Screening => {
                return Err(ServiceError::OutOfPhase {
                    observer: observer.to_string(),
                    phase: st.phase,
                })
            }
            ObserverPhase::Done => {
                return Ok(Directive::Done {
                    completion_code: self.completion_code(observer),
                })
            }
            ObserverPhase::Break => {
                return Ok(Directive::Break {
                    min_break_s: self.options.min_break_s,
                    remaining_s: self.break_remaining(&st),
                })
            }
            ObserverPhase::Training => Outstanding {
                triplet_id: self.manifest.training[st.training_cursor].id.clone(),
                swapped: false,
                phase: Phase::Training,
            },
            ObserverPhase::Testing => {
                if st.cursor == session.break_index && !st.break_taken && st.cursor < session.items.len() {
                    self.commit(EventBody::BreakStarted {
                        observer_id: observer.to_string(),
                    })?;
                    return Ok(Directive::Break {
                        min_break_s: self.options.min_break_s,
                        remaining_s: self.options.min_break_s,
                    });
                }
                let it = &session.items[st.cursor];
                Outstanding {
                    triplet_id: it.triplet_id.clone(),
                    swapped: it.swapped,
                    phase: Phase::Testing,
                }
            }
        };
        self.commit(EventBody::Served {
            observer_id: observer.to_string(),
            item: item.clone(),
        })?;
        Ok(Directive::Present(self.present(observer, &item)))
    }

    /// The unanswered item if there is one, otherwise [`Study::next`]; used
    /// by clients resuming after a reload.
    pub fn current(&mut self, observer: &str) -> Result<Directive> {
        let st = self.observer(observer)?;
        match st.outstanding.clone() {
            Some(item) => Ok(Directive::Present(self.present(observer, &item))),
            None => self.next(observer),
        }
    }

    pub fn end_break(&mut self, observer: &str) -> Result<Directive> {
        let st = self.observer(observer)?.clone();
        if st.phase != ObserverPhase::Break {
            return Err(ServiceError::OutOfPhase {
                observer: observer.to_string(),
                phase: st.phase,
            });
        }
        let remaining = self.break_remaining(&st);
        if remaining > 0 {
            return Err(ServiceError::BreakNotOver(remaining));
        }
        self.commit(EventBody::BreakEnded {
            observer_id: observer.to_string(),
        })?;
        self.next(observer)
    }

    /// Records a judgment for the currently served item. The response is on
    /// disk before this returns.
    pub fn submit(&mut self, observer: &str, triplet_id: &str, choice: &str, latency_ms: Option<u64>) -> Result<Ack> {
        let choice = parse_choice(choice)?;
        let st = self.observer(observer)?;
        let item = match &st.outstanding {
            Some(item) if item.triplet_id == triplet_id => item.clone(),
            _ => {
                return Err(ServiceError::Stale {
                    observer: observer.to_string(),
                    triplet: triplet_id.to_string(),
                })
            }
        };
        self.commit(EventBody::Responded {
            response: Response {
                observer_id: observer.to_string(),
                triplet_id: triplet_id.to_string(),
                choice,
                presented_swapped: item.swapped,
                phase: item.phase,
                latency_ms,
            },
        })?;
        let st = &self.state.observers[observer];
        Ok(Ack {
            accepted: true,
            phase: st.phase,
            cursor: st.cursor,
        })
    }

    /// Responses in submission order, read from the log on disk.
    pub fn export(&self, include_training: bool) -> Result<Vec<Response>> {
        Ok(read_events(&self.dir.join(EVENTS_FILE))?
            .0
            .into_iter()
            .filter_map(|e| match e.body {
                EventBody::Responded { response } if include_training || response.phase == Phase::Testing => Some(response),
                _ => None,
            })
            .collect())
    }

    /// Resolves an asset path inside the study's asset directory.
    pub fn asset_path(&self, rel: &str) -> Option<PathBuf> {
        let p = self.assets_dir.join(safe_relative(rel)?);
        p.is_file().then_some(p)
    }
}

/// State transition shared by live requests and log replay.
fn apply(state: &mut StudyState, manifest: &StudyManifest, event: &Event) {
    state.events = event.seq;
    match &event.body {
        EventBody::Registered { record } => {
            let phase = if !record.cleared() {
                ObserverPhase::Screening
            } else if manifest.training.is_empty() {
                ObserverPhase::Testing
            } else {
                ObserverPhase::Training
            };
            state.observers.insert(
                record.observer_id.clone(),
                ObserverState {
                    record: record.clone(),
                    phase,
                    training_cursor: 0,
                    cursor: 0,
                    break_taken: false,
                    break_started_ms: None,
                    outstanding: None,
                },
            );
        }
        EventBody::Served { observer_id, item } => {
            if let Some(st) = state.observers.get_mut(observer_id) {
                st.outstanding = Some(item.clone());
            }
        }
        EventBody::Responded { response } => {
            state.responses += 1;
            let Some(st) = state.observers.get_mut(&response.observer_id) else { return };
            st.outstanding = None;
            match response.phase {
                Phase::Training => {
                    st.training_cursor += 1;
                    if st.training_cursor >= manifest.training.len() {
                        st.phase = ObserverPhase::Testing;
                    }
                }
                Phase::Testing => {
                    st.cursor += 1;
                    let len = manifest.session(&response.observer_id).map_or(0, |s| s.items.len());
                    if st.cursor >= len {
                        st.phase = ObserverPhase::Done;
                    }
                }
            }
        }
        EventBody::BreakStarted { observer_id } => {
            if let Some(st) = state.observers.get_mut(observer_id) {
                st.phase = ObserverPhase::Break;
                st.break_taken = true;
                st.break_started_ms = Some(event.at_ms);
            }
        }
        EventBody::BreakEnded { observer_id } => {
            if let Some(st) = state.observers.get_mut(observer_id) {
                st.phase = ObserverPhase::Testing;
            }
        }
    }
}

/// All studies under one data root, each behind its own lock so observers
/// of different studies never contend.
#[derive(Debug)]
pub struct StudyStore {
    root: PathBuf,
    studies: Mutex<BTreeMap<String, Arc<Mutex<Study>>>>,
}

impl StudyStore {
    pub fn open(root: &Path) -> Result<StudyStore> {
        std::fs::create_dir_all(root)?;
        let mut studies = BTreeMap::new();
        for entry in std::fs::read_dir(root)? {
            let dir = entry?.path();
            if dir.join(META_FILE).is_file() {
                let s = Study::open(&dir)?;
                studies.insert(s.id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        Ok(StudyStore {
            root: root.to_path_buf(),
            studies: Mutex::new(studies),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Persists a study and returns its id; an identical manifest returns
    /// the existing id.
    pub fn create_study(&self, manifest: StudyManifest, assets_dir: &Path, options: StudyOptions) -> Result<String> {
        let id = study_id_of(&manifest)?;
        let mut studies = self.studies.lock().expect("store lock");
        if let Some(s) = studies.get(&id) {
            if s.lock().expect("study lock").manifest != manifest {
                return Err(ServiceError::Conflict(id));
            }
            return Ok(id);
        }
        let study = Study::create(&self.root, manifest, assets_dir, options)?;
        studies.insert(id.clone(), Arc::new(Mutex::new(study)));
        Ok(id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.studies.lock().expect("store lock").keys().cloned().collect()
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Study>>> {
        self.studies
            .lock()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownStudy(id.to_string()))
    }

    /// Runs `f` with exclusive access to one study.
    pub fn with<T>(&self, id: &str, f: impl FnOnce(&mut Study) -> Result<T>) -> Result<T> {
        let study = self.get(id)?;
        let mut guard = study.lock().expect("study lock");
        f(&mut guard)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Method;
    use crate::study::{schedule_sessions, Choice, QuestionType, Stimulus, StimulusCondition, StudyParams, TripletCensus};
    use crate::lightfield::ViewType;

    fn stim(content: &str, rate: Option<f64>) -> Stimulus {
        let key = rate.map(|r| format!("k_full5x5_{r}")).unwrap_or_else(|| "REFERENCE".into());
        Stimulus {
            content_id: content.into(),
            view: (0, 0),
            view_type: ViewType::S,
            condition: rate.map(|r| StimulusCondition {
                codec: "k".into(),
                method: Method::Full5x5,
                bitrate_bpp: r,
            }),
            image: format!("{content}/{key}.png"),
        }
    }

    /// Two contents, three pairs each; four observers, two evaluations per triplet.
    fn fixture(dir: &Path) -> (StudyManifest, PathBuf) {
        let assets = dir.join("assets");
        let mut triplets = Vec::new();
        for c in ["a", "b"] {
            std::fs::create_dir_all(assets.join(c)).unwrap();
            for key in ["REFERENCE", "k_full5x5_1", "k_full5x5_2", "k_full5x5_3"] {
                std::fs::write(assets.join(c).join(format!("{key}.png")), b"png").unwrap();
            }
            for (x, y) in [(1.0, 2.0), (1.0, 3.0), (2.0, 3.0)] {
                triplets.push(Triplet::new(stim(c, None), stim(c, Some(x)), stim(c, Some(y)), QuestionType::IntraMethod, None));
            }
        }
        let sessions = schedule_sessions(&triplets, 4, 2, 5).unwrap();
        let training = vec![triplets[0].clone()];
        let manifest = StudyManifest {
            version: 1,
            params: StudyParams {
                observers: 4,
                evals_per_triplet: 2,
                ..StudyParams::default()
            },
            ruleset: Default::default(),
            census: TripletCensus {
                per_type: Default::default(),
                total: triplets.len(),
                published_total: 0,
            },
            triplets,
            training,
            sessions,
        };
        (manifest, assets)
    }

    fn record(id: &str) -> ObserverRecord {
        ObserverRecord {
            observer_id: id.into(),
            demographics: Default::default(),
            acuity_ok: true,
            color_vision_ok: true,
            consent: true,
            consent_at: None,
        }
    }

    fn present(d: Directive) -> Presentation {
        match d {
            Directive::Present(p) => p,
            other => panic!("expected a presentation, got {other:?}"),
        }
    }

    #[test]
    fn create_is_idempotent_and_validated() {
        let tmp = tempfile::tempdir().unwrap();
        let (manifest, assets) = fixture(tmp.path());
        let store = StudyStore::open(&tmp.path().join("data")).unwrap();
        let id = store.create_study(manifest.clone(), &assets, StudyOptions::default()).unwrap();
        assert_eq!(store.create_study(manifest.clone(), &assets, StudyOptions::default()).unwrap(), id);
        let reopened = StudyStore::open(&tmp.path().join("data")).unwrap();
        assert_eq!(reopened.ids(), vec![id.clone()]);
        assert_eq!(reopened.create_study(manifest.clone(), &assets, StudyOptions::default()).unwrap(), id);

        let mut empty = manifest.clone();
        empty.triplets.clear();
        assert!(matches!(store.create_study(empty, &assets, StudyOptions::default()), Err(ServiceError::EmptyManifest(_))));
        let mut dangling = manifest;
        dangling.triplets[0].left.image = "a/missing.png".into();
        assert!(matches!(store.create_study(dangling.clone(), &assets, StudyOptions::default()), Err(ServiceError::DanglingAsset(_))));
        dangling.triplets[0].left.image = "../escape.png".into();
        assert!(matches!(store.create_study(dangling, &assets, StudyOptions::default()), Err(ServiceError::DanglingAsset(_))));
    }

    #[test]
    fn phases_break_and_sequencing() {
        let tmp = tempfile::tempdir().unwrap();
        let (manifest, assets) = fixture(tmp.path());
        let store = StudyStore::open(&tmp.path().join("data")).unwrap();
        let id = store.create_study(manifest.clone(), &assets, StudyOptions::default()).unwrap();
        let oid = manifest.sessions[0].observer_id.clone();
        let plan = manifest.sessions[0].clone();
        store.with(&id, |s| {
            assert!(matches!(s.next(&oid), Err(ServiceError::OutOfPhase { .. })));
            assert!(matches!(s.next("nobody"), Err(ServiceError::UnknownObserver(_))));
            let mut uncleared = record(&oid);
            uncleared.color_vision_ok = false;
            assert_eq!(s.register(uncleared).unwrap().phase, ObserverPhase::Screening);
            assert!(matches!(s.next(&oid), Err(ServiceError::OutOfPhase { .. })));
            assert_eq!(s.register(record(&oid)).unwrap().phase, ObserverPhase::Training);

            let p = present(s.next(&oid)?);
            assert_eq!((p.phase, p.flicker_ms), (Phase::Training, 500));
            assert!(matches!(s.next(&oid), Err(ServiceError::Outstanding(_))));
            assert!(matches!(s.submit(&oid, &p.triplet_id, "sideways", None), Err(ServiceError::InvalidChoice(_))));
            s.submit(&oid, &p.triplet_id, "left", Some(900))?;
            assert_eq!(s.state().observers[&oid].phase, ObserverPhase::Testing);

            for k in 0..plan.items.len() {
                if k == plan.break_index {
                    assert!(matches!(s.next(&oid)?, Directive::Break { .. }));
                    assert!(matches!(s.next(&oid)?, Directive::Break { .. }));
                    present(s.end_break(&oid)?);
                } else {
                    present(s.next(&oid)?);
                }
                let p = present(s.current(&oid)?);
                assert_eq!(p.triplet_id, plan.items[k].triplet_id);
                assert_eq!(p.swapped, plan.items[k].swapped);
                assert_eq!(p.index, k);
                let t = manifest.triplet(&p.triplet_id).unwrap();
                let shown_left = if p.swapped { &t.right.image } else { &t.left.image };
                assert!(p.left.ends_with(shown_left.as_str()));
                let ack = s.submit(&oid, &p.triplet_id, "right", None)?;
                assert_eq!(ack.cursor, k + 1);
                assert!(matches!(s.submit(&oid, &p.triplet_id, "right", None), Err(ServiceError::Stale { .. })));
            }
            assert!(matches!(s.next(&oid)?, Directive::Done { .. }));
            let exported = s.export(false)?;
            assert_eq!(exported.len(), plan.items.len());
            assert!(exported.iter().all(|r| r.choice == Choice::Right && r.phase == Phase::Testing));
            assert_eq!(s.export(true)?.len(), plan.items.len() + 1);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn minimum_break_is_enforced() {
        let tmp = tempfile::tempdir().unwrap();
        let (mut manifest, assets) = fixture(tmp.path());
        manifest.training.clear();
        let store = StudyStore::open(&tmp.path().join("data")).unwrap();
        let opts = StudyOptions { min_break_s: 3600, ..StudyOptions::default() };
        let id = store.create_study(manifest.clone(), &assets, opts).unwrap();
        let plan = manifest.sessions[1].clone();
        store
            .with(&id, |s| {
                s.register(record(&plan.observer_id))?;
                for _ in 0..plan.break_index {
                    let p = present(s.next(&plan.observer_id)?);
                    s.submit(&plan.observer_id, &p.triplet_id, "not_sure", None)?;
                }
                assert!(matches!(s.next(&plan.observer_id)?, Directive::Break { min_break_s: 3600, .. }));
                assert!(matches!(s.end_break(&plan.observer_id), Err(ServiceError::BreakNotOver(_))));
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn crash_after_write_loses_and_duplicates_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        let (manifest, assets) = fixture(tmp.path());
        let root = tmp.path().join("data");
        let store = StudyStore::open(&root).unwrap();
        let opts = StudyOptions { snapshot_every: 3, ..StudyOptions::default() };
        let id = store.create_study(manifest.clone(), &assets, opts).unwrap();
        let oid = manifest.sessions[2].observer_id.clone();
        let served = store
            .with(&id, |s| {
                s.register(record(&oid))?;
                let p = present(s.next(&oid)?);
                s.submit(&oid, &p.triplet_id, "left", None)?;
                let p = present(s.next(&oid)?);
                s.inject(Some(FailPoint::AfterDurableWrite));
                assert!(matches!(s.submit(&oid, &p.triplet_id, "right", Some(5)), Err(ServiceError::InjectedCrash)));
                Ok(p)
            })
            .unwrap();
        drop(store);

        let store = StudyStore::open(&root).unwrap();
        store
            .with(&id, |s| {
                let mine: Vec<Response> = s.export(true)?.into_iter().filter(|r| r.observer_id == oid).collect();
                assert_eq!(mine.iter().filter(|r| r.triplet_id == served.triplet_id && r.phase == Phase::Testing).count(), 1);
                // the client never saw the ack and retries
                assert!(matches!(s.submit(&oid, &served.triplet_id, "right", Some(5)), Err(ServiceError::Stale { .. })));
                assert_eq!(s.export(true)?.len(), mine.len());
                assert_eq!(s.state().observers[&oid].cursor, 1);
                assert_eq!(&Study::replay(s.dir())?, s.state());
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn torn_tail_is_discarded_and_replay_matches_snapshot() {
        let tmp = tempfile::tempdir().unwrap();
        let (manifest, assets) = fixture(tmp.path());
        let root = tmp.path().join("data");
        let store = StudyStore::open(&root).unwrap();
        let opts = StudyOptions { snapshot_every: 4, ..StudyOptions::default() };
        let id = store.create_study(manifest.clone(), &assets, opts).unwrap();
        let live = store
            .with(&id, |s| {
                for plan in &manifest.sessions {
                    s.register(record(&plan.observer_id))?;
                    for _ in 0..3 {
                        if let Directive::Present(p) = s.current(&plan.observer_id)? {
                            s.submit(&plan.observer_id, &p.triplet_id, "left", None)?;
                        }
                    }
                }
                Ok(s.state().clone())
            })
            .unwrap();
        drop(store);
        let log = root.join(&id).join(EVENTS_FILE);
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(b"{\"seq\":999,\"at_ms\":0,\"type\":\"resp").unwrap();
        drop(f);
        let store = StudyStore::open(&root).unwrap();
        store
            .with(&id, |s| {
                assert_eq!(s.state(), &live);
                assert_eq!(Study::replay(s.dir())?, live);
                Ok(())
            })
            .unwrap();
        assert!(std::fs::read_to_string(&log).unwrap().ends_with('\n'));
    }
}
