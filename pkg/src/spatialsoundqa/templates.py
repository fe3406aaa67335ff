"""Static question paraphrase bank, keyed by (question type, subtype).

Placeholders: {event}, {event1}, {event2} (sound-event phrases), {d}, {d1},
{d2}, {d3} (direction words) and {distance} (e.g. "3 meters").
Same-side templates come in a "both" form ({d}) and a "pair" form ({d1}, {d2}).
"""

DETECTION_SINGLE = [
    "Identify the sound events in the audio clip.",
    "What sound events can you detect in the audio recording?",
    "What are the distinct sounds present in this audio clip?",
    "Which sounds can be heard in this recording?",
    "List the sound events you hear in this audio.",
    "What kinds of sounds does this audio clip contain?",
    "Name the sound events present in the recording.",
    "Can you tell which sound events occur in this clip?",
]

LOCALIZATION_SINGLE = [
    "Where is the audio clip coming from?",
    "How would you describe the location of this audio clip?",
    "How would you describe the location of the {event}'s sound?",
    "At what distance and in which direction, is the {event}'s sound originating?",
    "From which direction and how far away does the sound come?",
    "Where is the sound of the {event} coming from?",
    "Locate the sound source in this clip: which direction and what distance?",
    "In which direction and how far away is the source of this sound?",
]

DETECTION_TARGETED = [
    "Identify the sound events in the audio clip coming from the {d1}, {d2}, {d3}, approximately {distance} away.",
    "What sound events can you detect in the audio recording emanating from the {d1}, {d2}, {d3}, roughly {distance} away?",
    "Which sounds come from the {d1}, {d2}, {d3}, about {distance} away?",
    "What do you hear from the {d1}, {d2}, {d3} at a distance of approximately {distance}?",
    "Name the sound events located to the {d1}, {d2}, {d3}, roughly {distance} from you.",
    "Which sound events originate from the {d1}, {d2}, {d3}, around {distance} away?",
    "Identify what is sounding from the {d1}, {d2}, {d3}, approximately {distance} from the listener.",
    "What sounds can be heard coming from the {d1}, {d2}, {d3}, about {distance} away?",
]

LOCALIZATION_TARGETED = [
    "Where is the sound of the {event} coming from?",
    "In which direction and how far away is the source of the {event}'s sound?",
    "At what distance and in which direction, is the {event}'s sound originating?",
    "How would you describe the location of the {event}'s sound?",
    "From where does the sound of the {event} reach you, and how far away is it?",
    "Locate the {event}'s sound: which direction and what distance?",
    "Which direction is the {event}'s sound coming from, and from how far?",
    "Describe the direction and distance of the {event}'s sound source.",
]

SAME_SIDE = [
    "Do the sound of {event1} and the sound of {event2} both come from your {d} side?",
    "Is the source of both {event1} and {event2}'s sounds from your {d} side?",
    "Are the sounds of {event1} and {event2} both on your {d} side?",
    "Do both the {event1}'s sound and the {event2}'s sound reach you from the {d}?",
    "Can you hear the {event1}'s sound from the {d1} and the {event2}'s from the {d2}?",
    "Is the sound from the {event1} on the {d1} and the sound from the {event2} on the {d2}?",
    "Does the {event1}'s sound come from the {d1} while the {event2}'s sound comes from the {d2}?",
    "Is the {event1} heard on the {d1} side and the {event2} on the {d2} side?",
]

RELATIVE_DIR = [
    "Would you find the sound of {event1} on the {d} side of the sound of {event2}?",
    "Does the sound of {event1} appear on the {d} of the sound of {event2}?",
    "Is the {event1}'s sound located on the {d} side of the {event2}'s sound?",
    "Relative to the sound of {event2}, is the sound of {event1} on the {d} side?",
    "Is the source of the {event1} to the {d} of the source of the {event2}?",
    "Compared with the {event2}'s sound, does the {event1}'s sound come from the {d} side?",
    "Would the {event1} be found on the {d} side of the {event2}?",
    "Is the sound of {event1} positioned on the {d} side relative to the sound of {event2}?",
]

CLOSER = [
    "In terms of straight-line distance, does the sound of {event1} reach you from a closer point compared to the sound of {event2}?",
    "When measuring the direct line distance, is the sound produced by {event1} closer to you than the sound from {event2}?",
    "Is the {event1}'s sound closer to you than the {event2}'s sound?",
    "Measured in a straight line, is the source of the {event1} nearer to you than the source of the {event2}?",
    "Does the sound of {event1} come from a shorter distance than the sound of {event2}?",
    "Is the {event1} closer to the listener than the {event2}?",
    "Comparing direct distances, is the {event1}'s sound nearer than the {event2}'s sound?",
    "Would you say the sound of {event1} originates closer to you than the sound of {event2}?",
]

INTER_DISTANCE = [
    "Can you estimate the distance from the sound of the {event1} to the sound of the {event2}?",
    "How far apart are the sound of the {event1} and the sound of the {event2}?",
    "What is the distance between the {event1}'s sound source and the {event2}'s sound source?",
    "Estimate how far the source of the {event1} is from the source of the {event2}.",
    "How much distance separates the {event1} from the {event2}?",
    "What is the approximate distance between the sounds of {event1} and {event2}?",
    "Roughly how far is the {event1}'s sound from the {event2}'s sound?",
    "Could you tell the distance between the sound of the {event1} and the sound of the {event2}?",
]

CLASS_ON_SIDE = [
    "What is the sound on the {d} side of the sound of the {event}?",
    "Which sound event is located on the {d} side of the {event}'s sound?",
    "What can be heard on the {d} of the sound of the {event}?",
    "Identify the sound that is on the {d} side of the {event}.",
    "Which sound comes from the {d} side relative to the sound of the {event}?",
    "What sound event lies to the {d} of the {event}'s sound?",
    "Relative to the {event}'s sound, what is the sound on the {d} side?",
    "Name the sound positioned on the {d} side of the sound of the {event}.",
]

LEFT_OR_RIGHT = [
    "Could you determine whether the {event1}'s sound is to the left or right of the {event2}'s sound?",
    "Is the sound of {event1} to the left or to the right of the sound of {event2}?",
    "Relative to the {event2}'s sound, is the {event1}'s sound on the left or the right?",
    "Is the {event1} left or right of the {event2}?",
    "Does the {event1}'s sound come from the left or the right of the {event2}'s sound?",
    "Which side of the {event2}'s sound is the {event1}'s sound on, left or right?",
    "Tell whether the source of the {event1} is left or right of the source of the {event2}.",
    "Left or right: where is the sound of {event1} relative to the sound of {event2}?",
]

BANK = {
    ("A", None): DETECTION_SINGLE,
    ("B", None): LOCALIZATION_SINGLE,
    ("C", None): DETECTION_TARGETED,
    ("D", None): LOCALIZATION_TARGETED,
    ("E", "same_side"): SAME_SIDE,
    ("E", "relative_dir"): RELATIVE_DIR,
    ("E", "closer"): CLOSER,
    ("E", "inter_distance"): INTER_DISTANCE,
    ("E", "class_on_side"): CLASS_ON_SIDE,
    ("E", "left_or_right"): LEFT_OR_RIGHT,
}
