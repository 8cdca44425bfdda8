//! Hash containers for group keys.
//!
//! Float keys keep their entropy in the high bits; the hasher must mix
//! them into the low bits and the control tag alike.

use std::collections::{HashMap, HashSet};

pub type FastMap<K, V> = HashMap<K, V, foldhash::fast::FixedState>;
pub type FastSet<K> = HashSet<K, foldhash::fast::FixedState>;
