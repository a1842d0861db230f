use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::real::Real;

/// Real-valued `[frame][bin][channel]` tensor, channel index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    frames: usize,
    bins: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(frames: usize, bins: usize, channels: usize) -> Self {
        Self { frames, bins, channels, data: vec![T::zero(); frames * bins * channels] }
    }

    pub fn from_vec(frames: usize, bins: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != frames * bins * channels {
            return Err(shape("tensor buffer length does not match its dimensions"));
        }
        Ok(Self { frames, bins, channels, data })
    }

    pub fn filled(frames: usize, bins: usize, channels: usize, value: T) -> Self {
        Self { frames, bins, channels, data: vec![value; frames * bins * channels] }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.bins, self.channels)
    }

    #[inline]
    pub fn index(&self, frame: usize, bin: usize, channel: usize) -> usize {
        (frame * self.bins + bin) * self.channels + channel
    }

    pub fn get(&self, frame: usize, bin: usize, channel: usize) -> T {
        self.data[self.index(frame, bin, channel)]
    }

    pub fn set(&mut self, frame: usize, bin: usize, channel: usize, value: T) {
        let i = self.index(frame, bin, channel);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            frames: self.frames,
            bins: self.bins,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
