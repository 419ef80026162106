//! De-identifiable participant and visit identifiers.
//!
//! A participant id is three uppercase letters followed by three digits
//! (`AAA001`). Allocation starts at `AAA001`; the digits count up to `999`,
//! then wrap to `000` while the letter block advances as a base-26 number
//! with the rightmost letter carrying first (`AAA999` -> `AAB000`,
//! `AAZ999` -> `ABA000`).
//!
//! A visit id is the participant id followed by a three digit per-participant
//! sequence starting at `001` (`AAA001001`, `AAA001002`, ...).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const LETTER_SPACE: u32 = 26 * 26 * 26;
const DIGIT_SPACE: u32 = 1000;
/// Number of distinct participant ids (`AAA000` through `ZZZ999`).
pub const PARTICIPANT_ID_SPACE: u32 = LETTER_SPACE * DIGIT_SPACE;
/// Highest visit sequence number a participant can reach.
pub const MAX_VISIT_SEQ: u16 = 999;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParticipantId {
    letters: [u8; 3],
    digits: u16,
}

impl ParticipantId {
    pub fn new(letters: [u8; 3], digits: u16) -> Result<Self> {
        if !letters.iter().all(u8::is_ascii_uppercase) {
            return Err(Error::validation("participant_id", "letters must be A-Z"));
        }
        if digits > 999 {
            return Err(Error::validation("participant_id", "digits must be 000-999"));
        }
        Ok(Self { letters, digits })
    }

    pub fn letters(&self) -> &str {
        // Always ASCII uppercase by construction.
        std::str::from_utf8(&self.letters).expect("ascii letters")
    }

    pub fn digits(&self) -> u16 {
        self.digits
    }

    /// Position of this id in the full keyspace, `AAA000` being 0.
    pub fn ordinal(&self) -> u32 {
        let block = self.letters.iter().fold(0u32, |acc, &l| acc * 26 + u32::from(l - b'A'));
        block * DIGIT_SPACE + u32::from(self.digits)
    }

    pub fn from_ordinal(ordinal: u32) -> Result<Self> {
        if ordinal >= PARTICIPANT_ID_SPACE {
            return Err(Error::IdExhausted);
        }
        let digits = (ordinal % DIGIT_SPACE) as u16;
        let mut block = ordinal / DIGIT_SPACE;
        let mut letters = [b'A'; 3];
        for slot in letters.iter_mut().rev() {
            *slot = b'A' + (block % 26) as u8;
            block /= 26;
        }
        Ok(Self { letters, digits })
    }
}

/// The id handed to the first participant of every organization.
pub fn first_participant_id() -> ParticipantId {
    ParticipantId {
        letters: *b"AAA",
        digits: 1,
    }
}

/// Successor of `current` in allocation order.
pub fn next_participant_id(current: ParticipantId) -> Result<ParticipantId> {
    let mut letters = current.letters;
    if current.digits < 999 {
        return Ok(ParticipantId {
            letters,
            digits: current.digits + 1,
        });
    }
    for slot in letters.iter_mut().rev() {
        if *slot == b'Z' {
            *slot = b'A';
        } else {
            *slot += 1;
            return Ok(ParticipantId { letters, digits: 0 });
        }
    }
    Err(Error::IdExhausted)
}

/// Id to issue after `last`, or the seed when nothing was issued yet.
pub fn allocate_after(last: Option<ParticipantId>) -> Result<ParticipantId> {
    match last {
        None => Ok(first_participant_id()),
        Some(id) => next_participant_id(id),
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:03}", self.letters(), self.digits)
    }
}

impl fmt::Debug for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParticipantId({self})")
    }
}

impl FromStr for ParticipantId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        let malformed = || Error::validation("participant_id", format!("`{s}` is not of the form AAA000"));
        if bytes.len() != 6
            || !bytes[..3].iter().all(u8::is_ascii_uppercase)
            || !bytes[3..].iter().all(u8::is_ascii_digit)
        {
            return Err(malformed());
        }
        let digits = s[3..].parse::<u16>().map_err(|_| malformed())?;
        Ok(Self {
            letters: [bytes[0], bytes[1], bytes[2]],
            digits,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VisitId {
    participant: ParticipantId,
    seq: u16,
}

impl VisitId {
    pub fn new(participant: ParticipantId, seq: u16) -> Result<Self> {
        if seq == 0 || seq > MAX_VISIT_SEQ {
            return Err(Error::validation("visit_id", "visit sequence must be 001-999"));
        }
        Ok(Self { participant, seq })
    }

    pub fn participant(&self) -> ParticipantId {
        self.participant
    }

    pub fn seq(&self) -> u16 {
        self.seq
    }
}

/// Visit id for a participant who already has `prior_visit_count` visits.
pub fn next_visit_id(participant: ParticipantId, prior_visit_count: usize) -> Result<VisitId> {
    if prior_visit_count >= usize::from(MAX_VISIT_SEQ) {
        return Err(Error::VisitSequenceExhausted(participant.to_string()));
    }
    VisitId::new(participant, prior_visit_count as u16 + 1)
}

impl fmt::Display for VisitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:03}", self.participant, self.seq)
    }
}

impl fmt::Debug for VisitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VisitId({self})")
    }
}

impl FromStr for VisitId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let malformed = || Error::validation("visit_id", format!("`{s}` is not of the form AAA000000"));
        if s.len() != 9 || !s.is_ascii() {
            return Err(malformed());
        }
        let participant: ParticipantId = s[..6].parse().map_err(|_| malformed())?;
        if !s.as_bytes()[6..].iter().all(u8::is_ascii_digit) {
            return Err(malformed());
        }
        let seq = s[6..].parse::<u16>().map_err(|_| malformed())?;
        VisitId::new(participant, seq).map_err(|_| malformed())
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(ParticipantId);
string_serde!(VisitId);

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pid(s: &str) -> ParticipantId {
        s.parse().unwrap()
    }

    /// Independent successor oracle: treat the id as a mixed-radix number
    /// written out digit by digit, and add one with explicit carries.
    fn oracle_successor(s: &str) -> Option<String> {
        let mut chars: Vec<char> = s.chars().collect();
        for i in (0..6).rev() {
            let (lo, hi) = if i < 3 { ('A', 'Z') } else { ('0', '9') };
            if chars[i] == hi {
                chars[i] = lo;
            } else {
                chars[i] = (chars[i] as u8 + 1) as char;
                return Some(chars.into_iter().collect());
            }
        }
        None
    }

    #[test]
    fn seed_is_aaa001() {
        let first = first_participant_id();
        assert_eq!(first.to_string(), "AAA001");
        assert_eq!(first.to_string().len(), 6);
        assert_eq!(first.letters(), "AAA");
    }

    #[test]
    fn digit_increment_and_wrap() {
        assert_eq!(next_participant_id(pid("AAA001")).unwrap().to_string(), "AAA002");
        assert_eq!(next_participant_id(pid("AAA999")).unwrap().to_string(), "AAB000");
        assert_eq!(next_participant_id(pid("AAZ999")).unwrap().to_string(), "ABA000");
        assert!(matches!(next_participant_id(pid("ZZZ999")), Err(Error::IdExhausted)));
    }

    #[test]
    fn thousandth_allocation_is_aab000() {
        // Enumerate from the seed: the 1st id is AAA001, so the 1000th is 999 steps later.
        let mut id = first_participant_id();
        for _ in 1..1000 {
            id = next_participant_id(id).unwrap();
        }
        assert_eq!(id.to_string(), "AAB000");
    }

    #[test]
    fn successor_matches_oracle_on_carry_boundaries() {
        for s in [
            "AAA001", "AAA998", "AAA999", "AAZ999", "AZZ999", "MZZ999", "ZZY999", "QRS123",
        ] {
            let expected = oracle_successor(s).unwrap();
            assert_eq!(
                next_participant_id(pid(s)).unwrap().to_string(),
                expected,
                "successor of {s}"
            );
        }
        assert_eq!(oracle_successor("ZZZ999"), None);
    }

    #[test]
    fn visit_ids() {
        assert_eq!(next_visit_id(pid("AAA001"), 0).unwrap().to_string(), "AAA001001");
        assert_eq!(next_visit_id(pid("AAA001"), 1).unwrap().to_string(), "AAA001002");
        assert!(matches!(
            next_visit_id(pid("AAA001"), 999),
            Err(Error::VisitSequenceExhausted(_))
        ));
        assert_eq!(next_visit_id(pid("AAA001"), 998).unwrap().to_string(), "AAA001999");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "AAA01", "aaa001", "AA0001", "AAA0011", "ÄAA001", "AAA-01"] {
            assert!(bad.parse::<ParticipantId>().is_err(), "{bad}");
        }
        for bad in ["AAA001000", "AAA00100", "AAA001X01", "aaa001001"] {
            assert!(bad.parse::<VisitId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn serde_uses_rendering() {
        let v = next_visit_id(pid("ABC042"), 2).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, "\"ABC042003\"");
        let back: VisitId = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn render_parse_identity(ordinal in 0u32..PARTICIPANT_ID_SPACE) {
            let id = ParticipantId::from_ordinal(ordinal).unwrap();
            let rendered = id.to_string();
            prop_assert_eq!(rendered.parse::<ParticipantId>().unwrap(), id);
            prop_assert_eq!(id.ordinal(), ordinal);
        }

        #[test]
        fn successor_is_next_ordinal_and_lexicographically_greater(ordinal in 0u32..PARTICIPANT_ID_SPACE - 1) {
            let id = ParticipantId::from_ordinal(ordinal).unwrap();
            let next = next_participant_id(id).unwrap();
            prop_assert_eq!(next.ordinal(), ordinal + 1);
            prop_assert!(next.to_string() > id.to_string());
            prop_assert_eq!(Some(next.to_string()), oracle_successor(&id.to_string()));
        }

        #[test]
        fn visit_prefix_is_participant(ordinal in 0u32..PARTICIPANT_ID_SPACE, prior in 0usize..999) {
            let id = ParticipantId::from_ordinal(ordinal).unwrap();
            let visit = next_visit_id(id, prior).unwrap();
            let rendered = visit.to_string();
            prop_assert_eq!(&rendered[..6], id.to_string());
            prop_assert_eq!(rendered.len(), 9);
            prop_assert_eq!(rendered.parse::<VisitId>().unwrap(), visit);
        }
    }
}
