//! The variation operator boundary: GA offspring, DE children, and
//! resampled variations, produced either by an LLM following the
//! instruction templates or by the deterministic simulated operators.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::config::DeVariant;
use crate::error::{EvoError, OperatorError};
use crate::prompt::Prompt;
use crate::provider::{ChatMessage, CompletionRequest, Provider, Purpose};
use crate::sim;
use crate::templates::{self, TemplateSet};

/// Extracted prompts longer than this are rejected and the call retried.
pub const MAX_PROMPT_CHARS: usize = 2000;

/// Sampling settings for operator completions.
pub const OPERATOR_TEMPERATURE: f64 = 0.5;
pub const OPERATOR_TOP_P: f64 = 0.95;

pub trait EvolutionOperator: Send + Sync {
    /// Cross over two parents, then mutate the result.
    fn ga_offspring(
        &self,
        parent1: &Prompt,
        parent2: &Prompt,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, EvoError>;

    /// DE evolution of `basic` against two donors and the optional prompt3.
    fn de_child(
        &self,
        basic: &Prompt,
        donor1: &Prompt,
        donor2: &Prompt,
        prompt3: Option<&Prompt>,
        variant: DeVariant,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, EvoError>;

    /// A semantics-preserving variation of `seed` for population init.
    fn resample(&self, seed: &Prompt, rng: &mut ChaCha8Rng) -> Result<String, EvoError>;
}

/// Offline operator over word-level genomes; fully seeded.
pub struct SimulatedOperator {
    vocabulary: Vec<String>,
    mutation_rate: f64,
}

impl SimulatedOperator {
    pub fn new(vocabulary: Vec<String>, mutation_rate: f64) -> Result<SimulatedOperator, EvoError> {
        if vocabulary.iter().all(|w| w.trim().is_empty()) {
            return Err(EvoError::Config(
                "simulated operator needs a non-empty vocabulary".into(),
            ));
        }
        if !(0.0..=1.0).contains(&mutation_rate) {
            return Err(EvoError::Config(format!(
                "mutation rate must be in [0, 1], got {mutation_rate}"
            )));
        }
        let vocabulary = vocabulary
            .into_iter()
            .filter(|w| !w.trim().is_empty())
            .collect();
        Ok(SimulatedOperator {
            vocabulary,
            mutation_rate,
        })
    }
}

impl EvolutionOperator for SimulatedOperator {
    fn ga_offspring(
        &self,
        parent1: &Prompt,
        parent2: &Prompt,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, EvoError> {
        let crossed = sim::sim_crossover(&parent1.text, &parent2.text, rng);
        Ok(sim::sim_mutate(
            &crossed,
            &self.vocabulary,
            self.mutation_rate,
            rng,
        ))
    }

    fn de_child(
        &self,
        basic: &Prompt,
        donor1: &Prompt,
        donor2: &Prompt,
        prompt3: Option<&Prompt>,
        variant: DeVariant,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, EvoError> {
        Ok(sim::sim_de_evolve(
            &basic.text,
            &donor1.text,
            &donor2.text,
            prompt3.map(|p| p.text.as_str()),
            variant,
            &self.vocabulary,
            self.mutation_rate,
            rng,
        ))
    }

    fn resample(&self, seed: &Prompt, rng: &mut ChaCha8Rng) -> Result<String, EvoError> {
        Ok(sim::sim_mutate(
            &seed.text,
            &self.vocabulary,
            self.mutation_rate,
            rng,
        ))
    }
}

/// LLM-backed operator: renders an instruction, completes it, parses the
/// marker span, and retries with a corrective message on unusable output.
pub struct LlmOperator {
    provider: Arc<Provider>,
    templates: TemplateSet,
    model: String,
    max_tokens: u32,
    max_attempts: u32,
}

impl LlmOperator {
    pub fn new(
        provider: Arc<Provider>,
        templates: TemplateSet,
        model: impl Into<String>,
        max_tokens: u32,
        max_attempts: u32,
    ) -> LlmOperator {
        LlmOperator {
            provider,
            templates,
            model: model.into(),
            max_tokens,
            max_attempts: max_attempts.max(1),
        }
    }

    fn run(&self, instruction: String) -> Result<String, EvoError> {
        let mut messages = vec![ChatMessage::user(instruction)];
        for _ in 0..self.max_attempts {
            let request = CompletionRequest {
                model: self.model.clone(),
                messages: messages.clone(),
                temperature: OPERATOR_TEMPERATURE,
                top_p: OPERATOR_TOP_P,
                max_tokens: self.max_tokens,
                purpose: Purpose::Operator,
            };
            let raw = self.provider.complete(&request)?;
            match templates::parse_new_prompt(&raw) {
                Ok(resp) if resp.extracted.chars().count() <= MAX_PROMPT_CHARS => {
                    return Ok(resp.extracted);
                }
                Ok(_) | Err(_) => {
                    messages.push(ChatMessage::user(format!(
                        "The previous answer could not be used. Reply with only the final \
                         prompt, wrapped with {} and {}, shorter than {MAX_PROMPT_CHARS} \
                         characters.",
                        templates::OPEN_MARKER,
                        templates::CLOSE_MARKER,
                    )));
                }
            }
        }
        Err(OperatorError::RetriesExhausted {
            attempts: self.max_attempts,
        }
        .into())
    }
}

impl EvolutionOperator for LlmOperator {
    fn ga_offspring(
        &self,
        parent1: &Prompt,
        parent2: &Prompt,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, EvoError> {
        self.run(templates::render_ga_instruction(
            &self.templates,
            parent1,
            parent2,
        )?)
    }

    fn de_child(
        &self,
        basic: &Prompt,
        donor1: &Prompt,
        donor2: &Prompt,
        prompt3: Option<&Prompt>,
        variant: DeVariant,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, EvoError> {
        self.run(templates::render_de_instruction(
            &self.templates,
            basic,
            donor1,
            donor2,
            prompt3,
            variant,
        )?)
    }

    fn resample(&self, seed: &Prompt, _rng: &mut ChaCha8Rng) -> Result<String, EvoError> {
        self.run(templates::render_resample_instruction(&self.templates, seed)?)
    }
}
