use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{Image, ImageShape};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub image: Image,
    pub label: usize,
}

/// An in-memory labeled image collection with a uniform image shape.
#[derive(Debug, Clone)]
pub struct ImageDataset {
    class_names: Vec<String>,
    shape: ImageShape,
    examples: Vec<LabeledExample>,
    by_class: Vec<Vec<usize>>,
}

impl ImageDataset {
    pub fn new(class_names: Vec<String>, examples: Vec<LabeledExample>) -> Result<Self> {
        let shape = match examples.first() {
            Some(e) => e.image.shape(),
            None => return Err(Error::Config("dataset has no examples".into())),
        };
        let mut by_class = vec![Vec::new(); class_names.len()];
        for (i, ex) in examples.iter().enumerate() {
            if ex.image.shape() != shape {
                return Err(Error::Contract(alloc::format!(
                    "example {i} has shape {:?}, dataset shape is {:?}",
                    ex.image.shape(),
                    shape
                )));
            }
            match by_class.get_mut(ex.label) {
                Some(list) => list.push(i),
                None => {
                    return Err(Error::Contract(alloc::format!(
                        "example {i} has label {} but the dataset has {} classes",
                        ex.label,
                        class_names.len()
                    )))
                }
            }
        }
        Ok(Self {
            class_names,
            shape,
            examples,
            by_class,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn example(&self, index: usize) -> &LabeledExample {
        &self.examples[index]
    }

    /// Indices of the examples of `class`, in dataset order.
    pub fn class_indices(&self, class: usize) -> &[usize] {
        &self.by_class[class]
    }

    /// Keeps only `classes`, relabeled to `0..classes.len()` in the given order.
    pub fn restrict(&self, classes: &[usize]) -> Result<ImageDataset> {
        let mut names = Vec::with_capacity(classes.len());
        let mut examples = Vec::new();
        for (new_label, &class) in classes.iter().enumerate() {
            if class >= self.num_classes() {
                return Err(Error::Config(alloc::format!(
                    "class {class} out of range for {} classes",
                    self.num_classes()
                )));
            }
            names.push(self.class_names[class].clone());
            for &i in &self.by_class[class] {
                examples.push(LabeledExample {
                    image: self.examples[i].image.clone(),
                    label: new_label,
                });
            }
        }
        ImageDataset::new(names, examples)
    }
}
