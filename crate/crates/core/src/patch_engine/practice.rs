//! Spaced retrieval practice with doubling intervals.

use serde::{Deserialize, Serialize};

use super::PatchError;
use crate::ids::StudentId;
use crate::time::{Timestamp, DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeReview {
    pub at: Timestamp,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeItem {
    pub id: String,
    pub student_id: StudentId,
    pub prompt_text: String,
    #[serde(default)]
    pub topic: Option<String>,
    pub learned_at: Timestamp,
    pub due_at: Timestamp,
    pub interval_index: u32,
    #[serde(default)]
    pub reviews: Vec<PracticeReview>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PracticeScheduler {
    /// Milliseconds.
    pub base_interval: i64,
}

impl Default for PracticeScheduler {
    fn default() -> Self {
        Self { base_interval: DAY }
    }
}

impl PracticeScheduler {
    pub fn new(base_interval: i64) -> Result<Self, PatchError> {
        if base_interval <= 0 {
            return Err(PatchError::BadInterval);
        }
        Ok(Self { base_interval })
    }

    /// A new item is due for its first self-quiz straight away.
    pub fn create(
        &self,
        id: impl Into<String>,
        student_id: StudentId,
        prompt_text: impl Into<String>,
        topic: Option<String>,
        learned_at: Timestamp,
    ) -> PracticeItem {
        PracticeItem {
            id: id.into(),
            student_id,
            prompt_text: prompt_text.into(),
            topic,
            learned_at,
            due_at: learned_at,
            interval_index: 0,
            reviews: Vec::new(),
        }
    }

    /// Success waits `base * 2^index` and moves up one interval; failure
    /// resets to one base interval. Reviews before the due time are
    /// rejected, which keeps due times strictly increasing.
    pub fn review(&self, item: &mut PracticeItem, reviewed_at: Timestamp, success: bool) -> Result<(), PatchError> {
        if reviewed_at < item.due_at {
            return Err(PatchError::NotDue {
                due: item.due_at,
                at: reviewed_at,
            });
        }
        if success {
            let factor = 1i64.checked_shl(item.interval_index).unwrap_or(i64::MAX);
            item.due_at = reviewed_at.plus(self.base_interval.saturating_mul(factor));
            item.interval_index += 1;
        } else {
            item.interval_index = 0;
            item.due_at = reviewed_at.plus(self.base_interval);
        }
        item.reviews.push(PracticeReview { at: reviewed_at, success });
        Ok(())
    }
}

/// Items due at `as_of`, soonest first; topics interleave by due time.
pub fn due_list<'a>(items: impl IntoIterator<Item = &'a PracticeItem>, as_of: Timestamp) -> Vec<&'a PracticeItem> {
    let mut due: Vec<&PracticeItem> = items.into_iter().filter(|i| i.due_at <= as_of).collect();
    due.sort_by(|a, b| (a.due_at, &a.id).cmp(&(b.due_at, &b.id)));
    due
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(s: &PracticeScheduler, id: &str, topic: &str, at: i64) -> PracticeItem {
        s.create(id, StudentId::new("a"), "recall", Some(topic.into()), Timestamp(at))
    }

    #[test]
    fn successes_double_the_interval() {
        let s = PracticeScheduler::default();
        let mut it = item(&s, "p", "stats", 0);
        let mut dues = Vec::new();
        for _ in 0..4 {
            let at = it.due_at;
            s.review(&mut it, at, true).unwrap();
            dues.push(it.due_at.0 / DAY);
        }
        assert_eq!(dues, vec![1, 3, 7, 15]);
    }

    #[test]
    fn failure_resets() {
        let s = PracticeScheduler::default();
        let mut it = item(&s, "p", "stats", 0);
        s.review(&mut it, Timestamp(0), true).unwrap();
        s.review(&mut it, Timestamp(DAY), true).unwrap();
        s.review(&mut it, Timestamp(3 * DAY), false).unwrap();
        assert_eq!(it.due_at, Timestamp(4 * DAY));
        assert_eq!(it.interval_index, 0);
    }

    #[test]
    fn early_reviews_rejected() {
        let s = PracticeScheduler::default();
        let mut it = item(&s, "p", "stats", 0);
        s.review(&mut it, Timestamp(0), true).unwrap();
        assert!(matches!(s.review(&mut it, Timestamp(DAY - 1), true), Err(PatchError::NotDue { .. })));
    }

    #[test]
    fn due_list_interleaves_topics() {
        let s = PracticeScheduler::default();
        let a = item(&s, "a", "stats", 2 * DAY);
        let b = item(&s, "b", "ethics", DAY);
        let c = item(&s, "c", "stats", 0);
        let later = item(&s, "d", "ethics", 10 * DAY);
        let ids: Vec<&str> = due_list([&a, &b, &c, &later], Timestamp(5 * DAY)).iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, vec!["c", "b", "a"]);
    }

    #[test]
    fn zero_interval_rejected() {
        assert_eq!(PracticeScheduler::new(0), Err(PatchError::BadInterval));
    }
}
