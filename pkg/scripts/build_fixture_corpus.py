#!/usr/bin/env python3
"""Build the synthetic fixture corpus under tests/fixtures/corpus/.

All content is invented. Each exchange is (interviewer text, participant
text, [(annotated substring, symptom_id), ...]); annotation offsets are
computed by exact substring search so they stay consistent with the text.
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from psylens.corpus import (  # noqa: E402
    ParticipantMetadata,
    Speaker,
    SpanAnnotation,
    SummaryReference,
    SummaryVariant,
    Transcript,
    Utterance,
    dump_annotations,
    dump_summary_reference,
    dump_taxonomy,
    dump_transcript,
    load_seed_taxonomy,
)

OUT = REPO / "tests" / "fixtures" / "corpus"

Exchange = tuple[str, str, list[tuple[str, str]]]


def build_transcript(
    pid: str, meta: ParticipantMetadata, exchanges: list[Exchange],
    extra_participant_turns: dict[int, list[tuple[str, list[tuple[str, str]]]]] | None = None,
) -> tuple[Transcript, list[SpanAnnotation]]:
    """Assemble utterances and locate annotation offsets."""
    extra_participant_turns = extra_participant_turns or {}
    utterances: list[Utterance] = []
    annotations: list[SpanAnnotation] = []

    def add(speaker: Speaker, text: str, spans: list[tuple[str, str]]) -> None:
        index = len(utterances)
        utterances.append(Utterance(index=index, speaker=speaker, text=text))
        for needle, symptom_id in spans:
            start = text.find(needle)
            if start < 0:
                raise SystemExit(f"{pid}: annotation text not found in utterance {index}: {needle!r}")
            annotations.append(
                SpanAnnotation(
                    utterance_index=index,
                    start_char=start,
                    end_char=start + len(needle),
                    symptom_id=symptom_id,
                )
            )

    for i, (interviewer, participant, spans) in enumerate(exchanges):
        add(Speaker.INTERVIEWER, interviewer, [])
        add(Speaker.PARTICIPANT, participant, spans)
        for text, extra_spans in extra_participant_turns.get(i, []):
            add(Speaker.PARTICIPANT, text, extra_spans)

    return Transcript(participant_id=pid, utterances=tuple(utterances), metadata=meta), annotations


def p3() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("Thank you for agreeing to talk with me today. How have you been feeling this past month?",
         "It has been a difficult month for me. I keep busy during the day, but the nights are the hardest part.",
         []),
        ("Can you tell me more about the nights?",
         "When I lie down, my mind will not stop. I cannot fall asleep until three or four in the morning, and even then I wake up every hour.",
         [("I cannot fall asleep until three or four in the morning, and even then I wake up every hour.", "insomnia")]),
        ("Do you notice anything that startles you during the day?",
         "Loud sounds are the worst. Whenever a siren passes, my whole body jumps and I look for somewhere to hide before I even think.",
         [("Whenever a siren passes, my whole body jumps and I look for somewhere to hide before I even think.", "arousal")]),
        ("How do you feel about the people around you here?",
         "I mostly keep to myself. People have been kind, and my neighbor sometimes brings food when she cooks too much.",
         []),
        ("Has your mood changed compared to last year?",
         "I feel flat most days. Things I used to enjoy, like cooking for my friends, do not interest me at all anymore.",
         [("Things I used to enjoy, like cooking for my friends, do not interest me at all anymore.", "loss_of_interest")]),
        ("What do you think about when you remember the journey here?",
         "I try not to remember it. When it comes back, I tell myself that part of my life is finished and I focus on my work.",
         []),
        ("How is your appetite these days?",
         "My appetite is fine. I eat regular meals, and on weekends I cook soup the way my mother taught me.",
         []),
        ("Do you ever feel anxious without knowing why?",
         "Yes, sometimes my chest gets tight and my hands shake for no reason, even when I am only watching television.",
         [("sometimes my chest gets tight and my hands shake for no reason, even when I am only watching television", "general_anxiety")]),
        ("How do you see yourself these days?",
         "I look in the mirror and I see someone who failed her family. I tell myself I am useless, even when my daughter says otherwise.",
         [("I see someone who failed her family. I tell myself I am useless", "negative_self_image")]),
        ("Is there anything that helps when it gets heavy?",
         "Walking helps a little. I walk along the river until my legs are tired, and then I can breathe more easily for a while.",
         []),
    ]
    meta = ParticipantMetadata(gender="female", age=41, residency_years=10,
                               trauma_event_count=8, pcl5_score=52)
    return build_transcript("P3", meta, exchanges)


def p7() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("How has work been going since we last spoke?",
         "Work is steady. The factory moved me to the day shift, which suits me better than the nights did.",
         []),
        ("You mentioned studying for a license before. How is that going?",
         "I stopped. I started to dislike studying, I do not want to study anymore, and the books just sit on the shelf.",
         [("I started to dislike studying, I do not want to study anymore", "negative_change_in_cognition"),
          ("I started to dislike studying, I do not want to study anymore", "loss_of_interest")]),
        ("How are you sleeping?",
         "Badly. In the evening I cannot settle, so I calm myself with a drink. After a drink or two I can sleep a little.",
         [("In the evening I cannot settle", "insomnia"),
          ("I calm myself with a drink. After a drink or two I can sleep a little.", "alcohol_dependence")]),
        ("Do you ever find yourself thinking about the crossing?",
         "When I dream, I dream about the night we crossed the river and the lights behind us. I have not told many people about that night.",
         []),
        ("How is your mood day to day?",
         "Heavy. Most mornings I wake with a weight on my chest, and small things can make me angry or close to tears.",
         [("Most mornings I wake with a weight on my chest, and small things can make me angry or close to tears.", "negative_change_in_mood")]),
        ("Thank you for telling me. Shall we take a short break before the next part?",
         "Yes, a break would be good.",
         []),
    ]
    extra = {
        1: [("Maybe that sounds lazy, but it is not laziness. Something in me changed after everything that happened.", [])],
    }
    meta = ParticipantMetadata(gender="male", age=49, residency_years=9,
                               trauma_event_count=12, pcl5_score=44)
    return build_transcript("P7", meta, exchanges, extra)


def p9() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("It is good to see you again. How has the season been treating you?",
         "The cold makes my joints ache, but otherwise I manage. My grandson visits on Sundays, which I look forward to.",
         []),
        ("How is your sleep lately?",
         "These days I sleep eleven or twelve hours and still feel tired, and some days I do not get out of bed until the afternoon.",
         [("I sleep eleven or twelve hours and still feel tired, and some days I do not get out of bed until the afternoon", "hypersomnia")]),
        ("You mentioned the subway was hard for you. Is that still true?",
         "Yes. When I have to ride the subway I count the stops with my heart pounding, afraid without any reason I could name.",
         [("When I have to ride the subway I count the stops with my heart pounding, afraid without any reason I could name.", "general_anxiety")]),
        ("What fills your days at the moment?",
         "I tend the small garden behind the building and I listen to the radio. The garden keeps my hands busy.",
         []),
        ("How do you feel about trusting new people here?",
         "I have decided people will always disappoint you in the end, so it is safer not to expect anything from anyone.",
         [("people will always disappoint you in the end, so it is safer not to expect anything from anyone", "negative_change_in_cognition")]),
    ]
    meta = ParticipantMetadata(gender="female", age=57, residency_years=15,
                               trauma_event_count=10, pcl5_score=61)
    return build_transcript("P9", meta, exchanges)


def p13() -> tuple[Transcript, list[SpanAnnotation]]:
    long_filler = (
        " I remember the smallest details of those months, the smell of the market in the early morning, "
        "the sound of carts on the road, and the way we learned to speak quietly about anything that mattered. "
        "Even now, when my day is calm, some part of me is still listening for footsteps in the corridor."
    )
    exchanges: list[Exchange] = [
        ("Thank you for sitting with me again. Could you start with how this week has gone for you?",
         "This week was quieter than most. I worked my shifts at the restaurant, came home, and tried to rest, though resting has never come easily to me." + long_filler,
         []),
        ("When you say resting is hard, what does a typical night look like?",
         "I lie down around midnight and stare at the ceiling. I cannot sleep more than two or three hours a night, and I hear every door that opens in the building." + long_filler,
         [("I cannot sleep more than two or three hours a night", "insomnia")]),
        ("Are there moments in the day when your body reacts before you can think?",
         "All the time. If someone drops a tray behind me, I am already crouching before I know it, my heart hammering as if something terrible is about to happen." + long_filler,
         [("If someone drops a tray behind me, I am already crouching before I know it, my heart hammering as if something terrible is about to happen", "arousal")]),
        ("How have your feelings about yourself been through all this?",
         "Not kind. I keep thinking I am broken in a way other people are not, that anyone who knew everything about me would walk away." + long_filler,
         [("I keep thinking I am broken in a way other people are not, that anyone who knew everything about me would walk away", "negative_self_image")]),
        ("What about the things you used to enjoy, like the sewing you told me about?",
         "The sewing machine sits under a cloth. Nothing pulls at me anymore, not sewing, not music, not even the market on Saturdays." + long_filler,
         [("Nothing pulls at me anymore, not sewing, not music, not even the market on Saturdays", "loss_of_interest")]),
        ("Do you talk with your sister about any of this?",
         "We talk about practical things, bills and schedules. She carries her own weight from those years, and I do not want to add mine to hers." + long_filler,
         []),
        ("How has your mood been, on the whole?",
         "Dark, if I am honest. Most days there is a low gray feeling from morning to night, and I cry at small things without warning." + long_filler,
         [("Most days there is a low gray feeling from morning to night, and I cry at small things without warning", "negative_change_in_mood")]),
        ("Is there anything that steadies you when the gray feeling comes?",
         "Sometimes cooking for the staff meal helps, because my hands know the work. Other times I sit by the window and watch the buses until it passes." + long_filler,
         []),
        ("You mentioned the border crossing once before. Do those memories still visit you?",
         "They do, mostly in winter. I remember the ice on the river and how we waited for the moon to go behind clouds. I can tell it now without shaking, most of the time." + long_filler,
         []),
        ("How is it for you when you hear news from back home?",
         "I turn the radio off. It is not that I do not care, it is that caring too much costs me several nights of sleep afterward." + long_filler,
         []),
        ("Have you noticed any worry that seems to come from nowhere?",
         "Yes, on buses especially. My breath gets short and my palms sweat even when the ride is smooth and nothing is wrong at all." + long_filler,
         [("My breath gets short and my palms sweat even when the ride is smooth and nothing is wrong at all", "general_anxiety")]),
        ("As we close for today, is there anything you want me to note for next time?",
         "Only that I am trying. I keep the appointments, I take the walks, and some weeks that is the most I can say." + long_filler,
         []),
    ]
    meta = ParticipantMetadata(gender="female", age=35, residency_years=6,
                               trauma_event_count=9, pcl5_score=66)
    return build_transcript("P13", meta, exchanges)


def p4() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("How have you settled into the new apartment?",
         "Well enough. It is small but warm, and the landlady leaves me alone, which I prefer.",
         []),
        ("How has your sleep been there?",
         "I cannot sleep without the light on.",
         [("I cannot sleep without the light on", "insomnia")]),
        ("Do sudden noises still bother you?",
         "Every slammed door makes me flinch.",
         [("Every slammed door makes me flinch", "arousal")]),
        ("How do you feel about your future at the moment?",
         "I expect things to go wrong even when they are going well. Good news feels like a trick that will be taken back.",
         [("I expect things to go wrong even when they are going well", "negative_change_in_cognition")]),
        ("Is there anything you are looking forward to?",
         "My cousin's wedding in the spring. I am sewing a dress for it, a little each evening.",
         []),
    ]
    meta = ParticipantMetadata(gender="female", age=38, residency_years=11,
                               trauma_event_count=10, pcl5_score=58)
    return build_transcript("P4", meta, exchanges)


def p11() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("How was the trip to the clinic last week?",
         "Long but fine. The nurse was patient with my questions and I caught the early bus home.",
         []),
        ("You mentioned drinking in the evenings. How is that now?",
         "I still need two drinks before I can face the night.",
         [("I still need two drinks before I can face the night", "alcohol_dependence")]),
        ("How is your energy during the day?",
         "I sleep through my alarm and nap again by noon.",
         [("I sleep through my alarm and nap again by noon", "hypersomnia")]),
        ("Do you enjoy the community dinners you used to attend?",
         "I stopped going. Sitting with people feels like work now, and nothing about it pulls me the way it did.",
         [("nothing about it pulls me the way it did", "loss_of_interest")]),
        ("What would a good week look like for you?",
         "A quiet one. Work, a paid bill, and a phone call with my brother where we only talk about football.",
         []),
    ]
    meta = ParticipantMetadata(gender="female", age=52, residency_years=14,
                               trauma_event_count=13, pcl5_score=47)
    return build_transcript("P11", meta, exchanges)


def p14() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("How are things at the restaurant where you work?",
         "Busy season now. My feet hurt by closing time but the pay is steady and the owner treats us fairly.",
         []),
        ("How has your mood been these past weeks?",
         "Low and gray most mornings.",
         [("Low and gray most mornings", "negative_change_in_mood")]),
        ("Do you find yourself worrying in quiet moments?",
         "My heart races in quiet rooms for no reason.",
         [("My heart races in quiet rooms for no reason", "general_anxiety")]),
        ("How do you think about yourself when you look back?",
         "I mostly see my mistakes. I tell myself that a stronger person would have protected everyone, and that I did not.",
         [("I tell myself that a stronger person would have protected everyone, and that I did not", "negative_self_image")]),
        ("What helps you get through the harder shifts?",
         "The cook jokes with everyone and the hours pass. On Sundays I rest and call my mother if the line connects.",
         []),
    ]
    meta = ParticipantMetadata(gender="female", age=45, residency_years=13,
                               trauma_event_count=7, pcl5_score=63)
    return build_transcript("P14", meta, exchanges)


def p19() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("You started night classes recently. How are they going?",
         "I like the mathematics class. The teacher explains slowly and I am not behind the others, which surprised me.",
         []),
        ("How is your sleep with the new schedule?",
         "Some nights I read until sunrise because sleep will not come.",
         [("sleep will not come", "insomnia")]),
        ("Do crowded places still feel difficult?",
         "Yes. In crowded hallways I press my back to the wall and watch every face until I can reach the door.",
         [("In crowded hallways I press my back to the wall and watch every face until I can reach the door", "arousal")]),
        ("How would you describe your spirits lately?",
         "Flat, like food without salt.",
         [("Flat, like food without salt", "negative_change_in_mood")]),
        ("What are you hoping the classes lead to?",
         "A bookkeeping certificate, and maybe an office job where I sit down and nobody shouts.",
         []),
    ]
    meta = ParticipantMetadata(gender="female", age=31, residency_years=5,
                               trauma_event_count=6, pcl5_score=39)
    return build_transcript("P19", meta, exchanges)


def p5() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("How did the holiday week go for you?",
         "Quiet. I worked two of the days for the extra pay and spent the rest at home with the television.",
         []),
        ("How has your drinking been since our last talk?",
         "Worse. A bottle does not last the weekend anymore, and I have started hiding the empties from my son.",
         [("A bottle does not last the weekend anymore, and I have started hiding the empties from my son", "alcohol_dependence")]),
        ("Do you still enjoy the choir on Fridays?",
         "I stopped attending. Singing used to lift me and now it does nothing, so I stay home instead.",
         [("Singing used to lift me and now it does nothing", "loss_of_interest")]),
        ("How do you feel when you think about the years in between?",
         "I think the world is a dangerous place and no paper or policeman can really protect you from it.",
         [("the world is a dangerous place and no paper or policeman can really protect you from it", "negative_change_in_cognition")]),
        ("Is there anything you would like to focus on next time?",
         "The drinking, I think. I know where it goes if I let it.",
         []),
    ]
    meta = ParticipantMetadata(gender="female", age=60, residency_years=18,
                               trauma_event_count=9, pcl5_score=71)
    return build_transcript("P5", meta, exchanges)


def p17() -> tuple[Transcript, list[SpanAnnotation]]:
    exchanges: list[Exchange] = [
        ("How has the new medication schedule felt this month?",
         "Simpler. One pill with breakfast, and the pharmacist marked the box so I do not lose track of the days.",
         []),
        ("How is your sleep on the whole?",
         "I am awake before four most mornings and cannot return to sleep however tired I am.",
         [("I am awake before four most mornings and cannot return to sleep however tired I am", "insomnia")]),
        ("Do you feel tense during ordinary errands?",
         "At the bank I rehearse every sentence before my turn and my hands sweat on the forms.",
         [("At the bank I rehearse every sentence before my turn and my hands sweat on the forms", "general_anxiety")]),
        ("How do you speak to yourself when something goes wrong?",
         "Harshly. I call myself a burden on everyone, though my daughter tells me to stop saying it.",
         [("I call myself a burden on everyone", "negative_self_image")]),
        ("What kept you steady this month?",
         "The vegetable stall. Customers expect me at six, and being expected somewhere is half the battle.",
         []),
    ]
    meta = ParticipantMetadata(gender="female", age=48, residency_years=12,
                               trauma_event_count=11, pcl5_score=55)
    return build_transcript("P17", meta, exchanges)


SUMMARIES: dict[tuple[str, str], str] = {
    ("P3", "experience"): (
        "The participant grew up in scarcity and left her home country after repeated hardship, "
        "crossing the border at night and spending years without legal status before resettlement. "
        "She was separated from family during the escape and still carries the weight of those years. "
        "Since arriving she has worked steadily, lives alone, and keeps a small routine of work and walks along the river."
    ),
    ("P3", "symptom"): (
        "She reports persistent insomnia, falling asleep only toward morning and waking hourly. "
        "She startles at sirens and hides before thinking, consistent with heightened arousal. "
        "She describes loss of interest in cooking and hobbies, episodes of anxiety with chest tightness and shaking hands, "
        "and a negative self-image in which she calls herself useless and a failure to her family."
    ),
    ("P3", "combined"): (
        "The participant left her home country after years of scarcity, crossing the border at night and "
        "living without status before resettlement, separated from family during the escape. "
        "She now reports persistent insomnia with hourly waking, startle responses to sirens with hiding behavior, "
        "loss of interest in cooking and friends, unexplained anxiety with chest tightness, "
        "and a negative self-image centered on having failed her family. She copes by keeping busy and walking along the river."
    ),
    ("P7", "experience"): (
        "The participant crossed the river at night under pursuit and resettled after detention and interrogation. "
        "He works day shifts at a factory and once studied for a license, a plan he has since abandoned. "
        "He rarely speaks about the crossing, even with people close to him."
    ),
    ("P7", "symptom"): (
        "He reports negative cognitive change and loss of interest, saying he started to dislike studying and wants to stop. "
        "He describes evening restlessness consistent with insomnia and calms himself with drinks before sleep, "
        "suggesting alcohol dependence. His mood is persistently heavy, with morning chest pressure, irritability, and tearfulness."
    ),
    ("P7", "combined"): (
        "The participant crossed the river at night and resettled after detention, and now works factory day shifts. "
        "He abandoned his license studies, saying he started to dislike studying and does not want to study anymore. "
        "He cannot settle in the evenings, drinks to fall asleep, and wakes with a weight on his chest, "
        "angry or tearful at small things. He seldom discusses the crossing, though it returns in dreams."
    ),
    ("P9", "experience"): (
        "The participant endured hunger in childhood and the death of a close relative before her departure, "
        "followed by years in hiding in a third country. She resettled long ago, tends a small garden, "
        "and is visited by her grandson on Sundays."
    ),
    ("P9", "symptom"): (
        "She reports hypersomnia, sleeping eleven or twelve hours and staying in bed until afternoon. "
        "She describes anxiety on the subway with a pounding heart and fear she cannot name, "
        "and a negative change in cognition, holding that people will always disappoint you so it is safer to expect nothing."
    ),
    ("P9", "combined"): (
        "The participant endured childhood hunger, the loss of a close relative, and years in hiding before resettlement. "
        "She now sleeps eleven or twelve hours yet remains tired, sometimes staying in bed until afternoon. "
        "Riding the subway brings a pounding heart and nameless fear, and she has concluded that people always disappoint, "
        "so it is safer not to expect anything. Gardening and Sunday visits from her grandson structure her weeks."
    ),
    ("P13", "experience"): (
        "The participant crossed a frozen river at night, waiting for cloud cover, after months of forced quiet and "
        "watchfulness in a border town. Her sister shares that history. She now works restaurant shifts, "
        "keeps her appointments, and watches the buses from her window in the evenings."
    ),
    ("P13", "symptom"): (
        "She reports severe insomnia, sleeping two or three hours and listening for every door. "
        "She crouches at sudden sounds with her heart hammering, consistent with arousal. "
        "She describes a negative self-image of being broken, loss of interest in sewing and music, "
        "a persistent low gray mood with easy crying, and bus rides with short breath and sweating palms."
    ),
    ("P13", "combined"): (
        "The participant fled across a frozen river at night after months of watchful silence, a history she shares with her sister. "
        "She now sleeps two or three hours a night, startles and crouches at dropped trays, and calls herself broken. "
        "Sewing and music no longer pull at her, her mood stays low and gray with easy tears, "
        "and anxiety surfaces on buses with short breath and sweating palms. Cooking for the staff meal and keeping appointments steady her."
    ),
}

REFERENCE_DOC = """Trauma-related and stressor-related conditions: a plain-language reference for interview review.

Exposure to serious threat, displacement, or loss can be followed by lasting changes in sleep, mood, thinking, and bodily alertness. This reference sketches the patterns interviewers most often need to recognize when reviewing transcripts, and the wording participants commonly use for each.

Heightened arousal often appears as startle responses out of proportion to the trigger: jumping at sirens, crouching at dropped objects, scanning rooms, or pressing against walls in crowds. Participants rarely name the pattern; they describe the body acting before thought.

Sleep disturbance takes two broad forms. Insomnia shows up as long sleep latency, frequent waking, waking before dawn, or needing light, sound, or alcohol to fall asleep. Hypersomnia shows up as very long sleep with persistent tiredness and difficulty leaving bed. Both matter clinically and should be recorded with the participant's own words.

Negative changes in cognition appear as settled beliefs formed after the events: that people always disappoint, that the world is unsafe, that good news is a trick. Negative self-image is related but distinct: the belief is about the self, such as being broken, useless, a burden, or a failure to one's family.

Negative changes in mood show as a persistent low, gray, or heavy state, irritability, and crying at small things. Loss of interest shows as formerly valued activities going quiet: instruments unplayed, machines under cloth, gatherings skipped without replacement.

Anxiety that is not tied to a reminder of the events may still be clinically significant. Participants describe racing hearts in quiet rooms, sweating over paperwork, counting stops on public transport, and rehearsing sentences before speaking.

Alcohol involvement is frequently framed as self-treatment for sleep or nerves: a drink to settle the evening, two drinks to face the night, bottles that no longer last the weekend. Quantity, secrecy, and the felt need are all worth recording.

When reviewing a transcript, prefer the participant's verbatim words over summaries, note the section where each pattern appears, and distinguish statements about past events from statements about present symptoms. Factual accounts of hardship, however severe, are not themselves symptoms unless a present perception, emotion, cognition, or behavior is described.
"""


def main() -> None:
    if OUT.exists():
        shutil.rmtree(OUT)
    (OUT / "transcripts").mkdir(parents=True)
    (OUT / "annotations").mkdir()
    (OUT / "summaries").mkdir()
    (OUT / "reference").mkdir()

    dump_taxonomy(load_seed_taxonomy(), OUT / "taxonomy.json")

    builders = [p3, p4, p5, p7, p9, p11, p13, p14, p17, p19]
    for builder in builders:
        transcript, annotations = builder()
        pid = transcript.participant_id
        dump_transcript(transcript, OUT / "transcripts" / f"{pid}.json")
        dump_annotations(annotations, pid, OUT / "annotations" / f"{pid}.json")
        rendered = sum(len(u.text) + 13 for u in transcript.utterances) + len(transcript.utterances) - 1
        print(f"{pid}: {len(transcript.utterances)} utterances, "
              f"{len(annotations)} annotations, ~{rendered} rendered chars")

    for (pid, variant), text in SUMMARIES.items():
        ref = SummaryReference(
            participant_id=pid, variant=SummaryVariant(variant), text=text
        )
        dump_summary_reference(ref, OUT / "summaries" / f"{pid}_{variant}.json")

    (OUT / "reference" / "trauma_reference.txt").write_text(REFERENCE_DOC, encoding="utf-8")
    print(f"fixture corpus written to {OUT}")


if __name__ == "__main__":
    main()
