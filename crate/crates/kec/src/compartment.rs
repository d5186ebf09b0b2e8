//! SEIR compartment bookkeeping.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Epidemiological compartments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compartment {
    S,
    E,
    I,
    R,
}

impl Compartment {
    pub const ALL: [Compartment; 4] = [Compartment::S, Compartment::E, Compartment::I, Compartment::R];

    pub fn index(self) -> usize {
        match self {
            Compartment::S => 0,
            Compartment::E => 1,
            Compartment::I => 2,
            Compartment::R => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::I => "I",
            Compartment::R => "R",
        }
    }
}

/// A value per compartment, indexable by [`Compartment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerCompartment<T>(pub [T; 4]);

impl<T: Clone> PerCompartment<T> {
    pub fn splat(v: T) -> Self {
        PerCompartment([v.clone(), v.clone(), v.clone(), v])
    }
}

impl<T: Copy> PerCompartment<T> {
    pub fn iter(&self) -> impl Iterator<Item = (Compartment, T)> + '_ {
        Compartment::ALL.iter().map(move |&j| (j, self.0[j.index()]))
    }
}

impl<T> Index<Compartment> for PerCompartment<T> {
    type Output = T;
    fn index(&self, j: Compartment) -> &T {
        &self.0[j.index()]
    }
}

impl<T> IndexMut<Compartment> for PerCompartment<T> {
    fn index_mut(&mut self, j: Compartment) -> &mut T {
        &mut self.0[j.index()]
    }
}
