//! Shared state between the WebSocket tasks and the blocking engine ports.
//!
//! UI input never queues behind the engine: socket tasks update the state
//! under a short lock and wake the engine, which waits on a condition
//! variable. Slider updates overwrite a single latest value.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use audexp_core::clock::ClockHandle;
use audexp_core::engine::{Answer, SubjectError, SubjectPort};
use audexp_core::spec::{ContinuousTaskConfig, DisplayStyle, Question};
use audexp_core::wav::{Clip, PlaybackError, PlaybackPort};
use tokio::sync::mpsc::UnboundedSender;

use crate::protocol::{encode, EngineMessage, UiMessage};

#[derive(Debug, Clone)]
pub struct BridgeOptions {
    /// How long a dropped subject may take to reconnect before the session
    /// fails with `Disconnected`.
    pub reconnect_grace: Duration,
    /// Extra time allowed past a clip's duration for `StimulusEnded`.
    pub playback_slack: Duration,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            reconnect_grace: Duration::from_secs(30),
            playback_slack: Duration::from_secs(30),
        }
    }
}

const POLL: Duration = Duration::from_millis(20);

struct Link {
    id: u64,
    tx: UnboundedSender<String>,
    greeted: bool,
}

#[derive(Default)]
struct State {
    link: Option<Link>,
    next_link_id: u64,
    lost_at: Option<Instant>,
    acks: u64,
    ack_at: u64,
    question: Option<(i64, i64)>,
    answer: Option<(i64, u64)>,
    playing: Option<usize>,
    ended_at: Option<u64>,
    continuous: bool,
    slider: f64,
    theme: Option<EngineMessage>,
    screen: Option<EngineMessage>,
    rejected: u64,
}

impl State {
    fn send(&self, msg: &EngineMessage) {
        if let Some(link) = &self.link {
            let _ = link.tx.send(encode(msg));
        }
    }
}

enum WaitError {
    Disconnected,
    Timeout,
}

pub struct Hub {
    state: Mutex<State>,
    changed: Condvar,
    clock: ClockHandle,
    token: String,
    options: BridgeOptions,
}

impl Hub {
    pub(crate) fn new(clock: ClockHandle, token: String, options: BridgeOptions) -> Arc<Self> {
        Arc::new(Self {
            state: Mutex::new(State {
                lost_at: Some(Instant::now()),
                slider: 0.5,
                ..State::default()
            }),
            changed: Condvar::new(),
            clock,
            token,
            options,
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn stim_url(&self, index: usize) -> String {
        format!("/session/{}/stim/{index}", self.token)
    }

    /// Makes `tx` the session's connection, replacing any previous one.
    pub(crate) fn attach(&self, tx: UnboundedSender<String>) -> u64 {
        let mut st = self.lock();
        st.next_link_id += 1;
        let id = st.next_link_id;
        st.link = Some(Link {
            id,
            tx,
            greeted: false,
        });
        st.lost_at = None;
        self.changed.notify_all();
        id
    }

    pub(crate) fn detach(&self, id: u64) {
        let mut st = self.lock();
        if st.link.as_ref().is_some_and(|l| l.id == id) {
            st.link = None;
            st.lost_at = Some(Instant::now());
            self.changed.notify_all();
        }
    }

    pub(crate) fn reject(&self, id: u64, reason: String) {
        let mut st = self.lock();
        st.rejected += 1;
        if let Some(link) = st.link.as_ref().filter(|l| l.id == id) {
            let _ = link.tx.send(encode(&EngineMessage::Rejected { reason }));
        }
    }

    /// Applies one UI message from connection `id`.
    pub(crate) fn on_message(&self, id: u64, msg: UiMessage) {
        let now = self.clock.now_us();
        let mut st = self.lock();
        if st.link.as_ref().is_none_or(|l| l.id != id) {
            return;
        }
        let reject = match msg {
            UiMessage::Ready => {
                let link = st.link.as_mut().expect("checked above");
                if link.greeted {
                    st.acks += 1;
                    st.ack_at = now;
                } else {
                    // A (re)connection: restore the current screen.
                    link.greeted = true;
                    for m in [st.theme.clone(), st.screen.clone()].into_iter().flatten() {
                        st.send(&m);
                    }
                }
                None
            }
            UiMessage::StimulusEnded => {
                if st.playing.is_some() && st.ended_at.is_none() {
                    st.ended_at = Some(now);
                }
                None
            }
            UiMessage::Answer { value } => match st.question {
                Some((lo, hi)) if (lo..=hi).contains(&value) => {
                    st.answer = Some((value, now));
                    st.question = None;
                    None
                }
                Some((lo, hi)) => Some(format!("answer {value} is outside {lo}..={hi}")),
                None => Some("no question is pending".to_string()),
            },
            UiMessage::Slider { value } => {
                if st.continuous && value.is_finite() {
                    st.slider = value.clamp(0.0, 1.0);
                }
                None
            }
            UiMessage::Heartbeat => None,
        };
        if let Some(reason) = reject {
            st.rejected += 1;
            st.send(&EngineMessage::Rejected { reason });
        }
        self.changed.notify_all();
    }

    /// Sends a screen to the UI and remembers it for reconnection.
    fn show(&self, msg: EngineMessage) {
        let mut st = self.lock();
        st.send(&msg);
        match msg {
            EngineMessage::ApplyTheme { .. } => st.theme = Some(msg),
            EngineMessage::Rejected { .. } => {}
            _ => st.screen = Some(msg),
        }
    }

    fn wait<T>(
        &self,
        deadline: Option<Instant>,
        mut ready: impl FnMut(&mut State) -> Option<T>,
    ) -> Result<T, WaitError> {
        let mut st = self.lock();
        loop {
            if let Some(v) = ready(&mut st) {
                return Ok(v);
            }
            if st.link.is_none()
                && st
                    .lost_at
                    .is_some_and(|t| t.elapsed() >= self.options.reconnect_grace)
            {
                return Err(WaitError::Disconnected);
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(WaitError::Timeout);
            }
            st = self
                .changed
                .wait_timeout(st, POLL)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    /// Blocks until a subject has connected and said `Ready`.
    pub fn wait_for_subject(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock();
        loop {
            if st.link.as_ref().is_some_and(|l| l.greeted) {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            st = self
                .changed
                .wait_timeout(st, POLL)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }

    pub fn is_connected(&self) -> bool {
        self.lock().link.is_some()
    }

    /// UI messages refused by the schema guard so far.
    pub fn rejected(&self) -> u64 {
        self.lock().rejected
    }

    fn check_link(&self) -> Result<(), SubjectError> {
        let st = self.lock();
        match (&st.link, st.lost_at) {
            (None, Some(t)) if t.elapsed() >= self.options.reconnect_grace => {
                Err(SubjectError::Disconnected)
            }
            _ => Ok(()),
        }
    }
}

/// The subject side of a live session.
pub struct BridgeSubject {
    pub(crate) hub: Arc<Hub>,
}

impl SubjectPort for BridgeSubject {
    fn apply_theme(&mut self, style: &DisplayStyle) -> Result<(), SubjectError> {
        self.hub.show(EngineMessage::ApplyTheme {
            background_color: style.background_color.clone(),
            font_color: style.font_color.clone(),
            font_size_pt: style.font_size_pt,
        });
        Ok(())
    }

    fn show_instructions(&mut self, text: &str) -> Result<u64, SubjectError> {
        let seen = self.hub.lock().acks;
        self.hub.show(EngineMessage::ShowInstructions {
            text: text.to_string(),
        });
        self.hub
            .wait(None, |st| (st.acks > seen).then_some(st.ack_at))
            .map_err(|_| SubjectError::Disconnected)
    }

    fn show_question(&mut self, q: &Question) -> Result<Answer, SubjectError> {
        {
            let mut st = self.hub.lock();
            st.question = Some((q.scale_min, q.scale_max));
            st.answer = None;
        }
        self.hub.show(EngineMessage::ShowQuestion {
            prompt: q.prompt.clone(),
            scale_min: q.scale_min,
            scale_max: q.scale_max,
            anchors: q.anchor_labels.clone(),
        });
        let (value, commit_us) = self
            .hub
            .wait(None, |st| st.answer.take())
            .map_err(|_| SubjectError::Disconnected)?;
        Ok(Answer { value, commit_us })
    }

    fn start_continuous(
        &mut self,
        task: &ContinuousTaskConfig,
        _onset_us: u64,
        _duration_us: u64,
    ) -> Result<(), SubjectError> {
        {
            let mut st = self.hub.lock();
            st.continuous = true;
            st.slider = 0.5;
        }
        self.hub.show(EngineMessage::StartContinuous {
            labels: (task.slider_min_label.clone(), task.slider_max_label.clone()),
        });
        Ok(())
    }

    fn current_slider(&mut self) -> Result<f64, SubjectError> {
        self.hub.check_link()?;
        Ok(self.hub.lock().slider)
    }

    fn stop_continuous(&mut self) -> Result<(), SubjectError> {
        self.hub.lock().continuous = false;
        self.hub.show(EngineMessage::StopContinuous);
        Ok(())
    }

    fn session_done(&mut self) -> Result<(), SubjectError> {
        self.hub.show(EngineMessage::SessionDone);
        Ok(())
    }
}

/// Browser playback: the UI fetches the clip over HTTP and reports its end.
pub struct BridgePlayback {
    pub(crate) hub: Arc<Hub>,
    last_onset: u64,
    deadline: Option<Instant>,
}

impl BridgePlayback {
    pub(crate) fn new(hub: Arc<Hub>) -> Self {
        Self {
            hub,
            last_onset: 0,
            deadline: None,
        }
    }
}

impl PlaybackPort for BridgePlayback {
    fn start(&mut self, clip: &Clip, requested_us: u64) -> Result<u64, PlaybackError> {
        self.hub.clock.wait_until(requested_us.max(self.last_onset));
        {
            let mut st = self.hub.lock();
            st.playing = Some(clip.index);
            st.ended_at = None;
        }
        self.hub.show(EngineMessage::PresentStimulus {
            url: self.hub.stim_url(clip.index),
            label: clip.label.clone(),
        });
        let onset = self.hub.clock.now_us().max(self.last_onset);
        self.last_onset = onset;
        self.deadline = Some(
            Instant::now()
                + Duration::from_micros(clip.info.duration_us())
                + self.hub.options.playback_slack,
        );
        Ok(onset)
    }

    fn is_done(&mut self, _clip: &Clip) -> Result<bool, PlaybackError> {
        self.hub.check_link().map_err(|_| PlaybackError::Closed)?;
        Ok(self.hub.lock().ended_at.is_some())
    }

    fn wait_done(&mut self, clip: &Clip) -> Result<u64, PlaybackError> {
        let ended = self
            .hub
            .wait(self.deadline, |st| st.ended_at)
            .map_err(|e| match e {
                WaitError::Disconnected => PlaybackError::Closed,
                WaitError::Timeout => PlaybackError::Device(format!(
                    "subject interface never reported the end of stimulus {}",
                    clip.index
                )),
            })?;
        self.hub.lock().playing = None;
        Ok(ended)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use audexp_core::clock::VirtualClock;
    use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver};

    fn hub() -> Arc<Hub> {
        Hub::new(
            VirtualClock::new().handle(),
            "t".into(),
            BridgeOptions::default(),
        )
    }

    fn drain(rx: &mut UnboundedReceiver<String>) -> Vec<EngineMessage> {
        std::iter::from_fn(|| rx.try_recv().ok())
            .map(|t| crate::protocol::decode(&t).unwrap())
            .collect()
    }

    #[test]
    fn first_ready_greets_then_acknowledges() {
        let hub = hub();
        hub.show(EngineMessage::ShowInstructions { text: "hi".into() });
        let (tx, mut rx) = unbounded_channel();
        let id = hub.attach(tx);
        hub.on_message(id, UiMessage::Ready);
        assert_eq!(
            drain(&mut rx),
            [EngineMessage::ShowInstructions { text: "hi".into() }]
        );
        assert_eq!(hub.lock().acks, 0);
        hub.on_message(id, UiMessage::Ready);
        assert_eq!(hub.lock().acks, 1);
        assert!(drain(&mut rx).is_empty());
    }

    #[test]
    fn stale_connections_are_ignored() {
        let hub = hub();
        let (tx, _rx) = unbounded_channel();
        let old = hub.attach(tx);
        let (tx, _rx2) = unbounded_channel();
        let new = hub.attach(tx);
        hub.lock().question = Some((1, 5));
        hub.on_message(old, UiMessage::Answer { value: 3 });
        assert_eq!(hub.lock().answer, None);
        hub.detach(old);
        assert!(hub.is_connected());
        hub.on_message(new, UiMessage::Answer { value: 3 });
        assert_eq!(hub.lock().answer, Some((3, 0)));
    }

    #[test]
    fn slider_only_moves_during_continuous_rating() {
        let hub = hub();
        let (tx, _rx) = unbounded_channel();
        let id = hub.attach(tx);
        hub.on_message(id, UiMessage::Slider { value: 0.9 });
        assert_eq!(hub.lock().slider, 0.5);
        hub.lock().continuous = true;
        hub.on_message(id, UiMessage::Slider { value: -2.0 });
        assert_eq!(hub.lock().slider, 0.0);
        hub.on_message(id, UiMessage::Slider { value: f64::NAN });
        assert_eq!(hub.lock().slider, 0.0);
        hub.on_message(id, UiMessage::Slider { value: 0.3 });
        hub.on_message(id, UiMessage::Slider { value: 0.7 });
        assert_eq!(hub.lock().slider, 0.7);
    }

    #[test]
    fn disconnect_outlasting_grace_is_fatal() {
        let hub = Hub::new(
            VirtualClock::new().handle(),
            "t".into(),
            BridgeOptions {
                reconnect_grace: Duration::from_millis(30),
                ..Default::default()
            },
        );
        let mut subject = BridgeSubject { hub: hub.clone() };
        let err = subject.show_question(&Question {
            prompt: "?".into(),
            scale_min: 1,
            scale_max: 3,
            anchor_labels: None,
        });
        assert!(matches!(err, Err(SubjectError::Disconnected)));
    }
}
