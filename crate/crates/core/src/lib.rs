pub mod bayes;
pub mod curriculum;
pub mod estimator;
pub mod harness;
pub mod learner;
pub mod megagrid;
pub mod sebn;
pub mod search;
pub mod synthetic;
