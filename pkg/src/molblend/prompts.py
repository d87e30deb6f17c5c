"""Embedded prompt texts for data generation, filtering, and evaluation.

Every string here is a fixed resource: generation prompts for the three
instruction-data types, the factual-accuracy filter, the per-type system
prompts and instruction pools used when assembling datasets, the pairwise
response judge, the membrane-permeability task prompts, and the
reasoning-quality judge.  Placeholders use the literal spellings
``{IUPAC name}``, ``{Description}``, ``{SMILES}``, ``{level}``,
``{Response of Assistant 1}`` and ``{Response of Assistant 2}``; they are
substituted by plain text replacement, never ``str.format``.
"""

from __future__ import annotations

# ---------------------------------------------------------------------------
# instruction-data generation

STRUCTURAL_GEN_SYSTEM = (
    "You are a chemical assistant and you are given a molecule with the IUPAC name.\n"
    "Provide a detailed explanation of the given molecule at the molecular "
    "structural level. Explain which substructures and functional groups are "
    "contained and how they are connected."
)

STRUCTURAL_GEN_USER = "Input molecule (IUPAC name): {IUPAC name}"

FEATURE_GEN_SYSTEM = (
    "You are a {level} assistant that can analyze the {level} properties of a "
    "single molecule. A molecule is given as the IUPAC name, accompanied by a "
    "description.\n"
    "Based on the provided IUPAC name and the description, explain **the {level} "
    "properties** in a detailed manner by relating the {level} properties to its "
    "structural information."
)

FEATURE_GEN_USER = "Input molecule (IUPAC name): {IUPAC name}\nDescription: {Description}"

CONVERSATION_GEN_SYSTEM = (
    "You are an AI chemical assistant with extensive knowledge of molecular "
    "properties. You are given a molecule with the IUPAC name and its description.\n"
    "Your task is to design a conversation between you (e.g. AI chemical "
    "assistant) and a user asking about this molecule. Design a sequence of pairs "
    "of questions and answers that gradually deepen the level of the "
    "conversation, from structural information and chemical properties to "
    "biological functionalities.\n"
    "Include questions asking about the molecule's structural, chemical, and "
    "biological features, including functional groups, the most specific "
    "compound species name, corresponding chemical and biological properties, "
    "and functionalities, etc."
)

CONVERSATION_GEN_USER = FEATURE_GEN_USER

FILTER_SYSTEM = (
    "You are an assistant specializing in chemistry and biology. You are "
    "provided with a molecule's IUPAC name and its {level} description.\n"
    "Your task is to evaluate the factual accuracy of the given description "
    "based on the provided IUPAC name.\n"
    "Assign a score from 1 to 4 based on the following criteria:\n"
    "1: All contents are factually incorrect\n"
    "2: Some contents are factually correct, but most are factually incorrect\n"
    "3: Most contents are factually correct, but some are factually incorrect\n"
    "4: All contents are factually correct\n"
    'Indicate your score in the format: "Score: ...".'
)

FILTER_USER = FEATURE_GEN_USER

# ---------------------------------------------------------------------------
# assembled-dataset system prompts and instruction pools

CONVERSATION_DATASET_SYSTEM = (
    "You are a helpful assistant specializing in chemistry and biology. The "
    "instruction that describes a task is given, paired with molecules. Write a "
    "response that appropriately completes the request."
)

INSTRUCTION_DATASET_SYSTEM = (
    "You are a helpful assistant specializing in chemistry and biology. The "
    "instruction that describes a task is given, paired with molecules. Provide "
    "a comprehensive response that appropriately completes the request."
)

STRUCTURAL_INSTRUCTIONS = (
    "Explain the components and how they are linked within the provided molecule.",
    "Detail the structural parts of the molecule and their interconnections.",
    "Outline the individual subunits of the molecule and describe their arrangement.",
    "Provide an analysis of the molecular substructures and how they are bonded together.",
    "Identify the segments of the molecule and elaborate on their attachments.",
    "Break down the molecular structure into its subcomponents and describe how they are connected.",
    "Map out the substructures within the molecule and illustrate how they are linked.",
)

CHEMICAL_INSTRUCTIONS = (
    "Provide an in-depth explanation of the chemical characteristics of the given molecule.",
    "Elaborate on the detailed chemical attributes and properties of the molecule.",
    "Describe the chemical properties of the provided molecule with comprehensive detail.",
    "Offer a thorough analysis of the chemical characteristics of the compound.",
    "Discuss the chemical properties of the given compound extensively and in detail.",
    "Present an in-depth overview of the chemical attributes of the provided compound.",
    "Explain the detailed aspects of the chemical properties of the molecule.",
    "Analyze the the molecule's chemical properties with an in-depth approach.",
    "Present a detailed report on the chemical traits of the compound.",
)

BIOLOGICAL_INSTRUCTIONS = (
    "Provide a comprehensive explanation of the biological characteristics of "
    "the given molecule, focusing on how its main substructures relate to its "
    "biological properties.",
    "Discuss the molecule's biological properties thoroughly, emphasizing the "
    "connection between its key substructures and their functions.",
    "Elaborate in detail on the biological attributes of the provided compound, "
    "explaining how its primary substructures are linked to its properties.",
    "Analyze the biological properties of the given compound, providing an "
    "in-depth explanation of how the core substructures of the molecule "
    "influence these properties.",
    "Describe the biological characteristics of the given molecule in detail, "
    "paying particular attention to how its main structural components affect "
    "its behavior.",
    "Offer an in-depth discussion of the biological traits of the molecule, "
    "specifically highlighting the relationship between the core parts of the "
    "molecule and its properties.",
    "Present a detailed analysis of the biological properties of the provided "
    "molecule, focusing on how the essential substructures within the molecule "
    "correlate with these properties.",
    "Give an in-depth explanation of the biological properties of the provided "
    "molecule, especially how its core substructures are associated with these "
    "properties.",
    "Outline the biological properties of the given compound comprehensively, "
    "emphasizing the interplay between its main substructures and its "
    "biological behavior.",
)

INSTRUCTION_POOLS = {
    "structural": STRUCTURAL_INSTRUCTIONS,
    "chem_feature": CHEMICAL_INSTRUCTIONS,
    "bio_feature": BIOLOGICAL_INSTRUCTIONS,
}

# ---------------------------------------------------------------------------
# general-understanding evaluation

EVAL_QUESTIONS = {
    "structural": "Explain the structural features of the given molecule.",
    "chemical": "Explain the chemical properties of the given molecule.",
    "biological": "Explain the biological properties of the given molecule.",
}

JUDGE_SYSTEM = (
    "You are a helpful assistant specializing in chemistry and biology. Your "
    "task is to evaluate the performance of two AI assistants in responding to "
    "a user question about a molecular explanation.\n"
    "For your reference, the SMILES notation, IUPAC name, and a description of "
    "the given molecule are provided.\n"
    "Evaluate each assistant's response based on the following criteria: "
    "helpfulness, relevance, accuracy, and level of detail. Rate each criterion "
    "on a scale of 1 to 10, where a higher score indicates better performance. "
    "Additionally, provide an overall score for each assistant's response on a "
    "scale of 1 to 10.\n"
    "First output the scores of each assistant in the following format:\n"
    "[Assistant n]\n"
    "- Helpfulness: ...\n"
    "- Relevance: ...\n"
    "- Accuracy: ...\n"
    "- Level of detail: ...\n"
    "- Overall: ...\n"
    "In the subsequent line, please provide a comprehensive explanation of your "
    "evaluation, avoiding any potential bias and ensuring that the order in "
    "which the responses were presented does not affect your judgment."
)

JUDGE_USER = (
    "[Molecule Information]\n"
    "SMILES: {SMILES}\n"
    "IUPAC Name: {IUPAC name}\n"
    "Description: {Description}\n"
    "\n"
    "[Question]\n"
    "Explain the {level} features of the given molecule.\n"
    "\n"
    "[Assistant 1]\n"
    "{Response of Assistant 1}\n"
    "[End of Assistant 1]\n"
    "\n"
    "[Assistant 2]\n"
    "{Response of Assistant 2}\n"
    "[End of Assistant 2]"
)

JUDGE_CRITERIA = ("Helpfulness", "Relevance", "Accuracy", "Level of detail", "Overall")

# ---------------------------------------------------------------------------
# membrane-permeability task

PAMPA_SYSTEM_BASE = (
    "You are a drug discovery assistant tasked with predicting the permeability "
    "of a molecule in the Parallel Artificial Membrane Permeability Assay "
    "(PAMPA). Specifically, your role is to determine whether a molecule has "
    "high permeability or low-to-moderate permeability to the artificial "
    "membrane."
)

PAMPA_TASK_INFO = (
    "Consider the following properties of molecules:\n"
    "1) Lipophilicity: Higher lipophilicity generally correlates with increased "
    "permeability, up to a certain threshold.\n"
    "2) Molecular Size and Weight: Smaller molecules tend to have higher "
    "permeability.\n"
    "3) Polarity: Low polar surface area and low hydrogen bond donors/acceptors "
    "are associated with higher permeability.\n"
    "4) Charge: Neutral molecules typically have better permeability compared "
    "to charged species, which are less likely to diffuse through the "
    "hydrophobic lipid bilayer.\n"
    "5) Rigidity: A high degree of rigidity often permeate membranes more easily.\n"
    "6) Aromaticity: The presence of aromatic rings can influence lipophilicity "
    "and molecular interactions with the lipid bilayer, thereby affecting "
    "permeability.\n"
    "7) Hydration Energy: Lower hydration energy generally improves membrane "
    "permeation.\n"
    "8) Membrane Affinity: Compounds with a balanced affinity for both the "
    "aqueous phase and the lipid bilayer tend to exhibit better PAMPA "
    "permeability."
)

PAMPA_ANSWER_FORMAT = (
    "Your final answer should be formatted as either : 'Final answer : High "
    "permeability.' or 'Low-to-moderate permeability.'"
)

PAMPA_USER = "Determine the permeability of the given molecule to the artificial membrane."

PAMPA_COT_LINE = "Please provide a rationale for your answer."

FINAL_ANSWER_PREFIX = "Final answer: "

# ---------------------------------------------------------------------------
# reasoning-quality judge

REASONING_JUDGE_SYSTEM = (
    "You are a helpful assistant specializing in chemistry and biology, whose "
    "role is to evaluate the quality of the reasoning process of an AI "
    "assistant in predicting the permeability of molecules in the Parallel "
    "Artificial Membrane Permeability Assay (PAMPA).\n"
    "For your reference, the SMILES of the given molecule is provided.\n"
    "Evaluate the quality of each assistant's response based on the criteria "
    "below:\n"
    "Fidelity: It evaluates the soundness and relevance of the reasoning "
    "process by assessing whether the reasoning is valid to appropriately "
    "address the given task.\n"
    "Helpfulness: It evaluates the quality of the reasoning process by "
    "assessing whether the reasoning is clear, informative, and helpful to the "
    "user.\n"
    "First, provide an explanation of your assessment, and then evaluate the "
    "score on a scale of 1 to 10, where a higher score indicates better "
    "quality. Follow the format in the below example:\n"
    "Explanation of the evaluation:\n"
    "Final Decision:\n"
    "[Assistant n]\n"
    "- Fidelity : ...\n"
    "- Helpfulness : ..."
)

REASONING_JUDGE_USER = (
    "[Molecule Information]\n"
    "SMILES: {SMILES}\n"
    "\n"
    "[Assistant 1]\n"
    "{Response of Assistant 1}\n"
    "[End of Assistant 1]\n"
    "\n"
    "[Assistant 2]\n"
    "{Response of Assistant 2}\n"
    "[End of Assistant 2]"
)

REASONING_CRITERIA = ("Fidelity", "Helpfulness")

# ---------------------------------------------------------------------------
# multiple-choice question answering

MCQ_SYSTEM = INSTRUCTION_DATASET_SYSTEM

MCQ_USER_SUFFIX = "Answer with the letter of the correct option."


def mcq_user_text(question: str, options: dict[str, str]) -> str:
    """Question plus lettered options, shared by fine-tuning and scoring."""
    lines = [question]
    for letter in sorted(options):
        lines.append(f"{letter}. {options[letter]}")
    lines.append(MCQ_USER_SUFFIX)
    return "\n".join(lines)
