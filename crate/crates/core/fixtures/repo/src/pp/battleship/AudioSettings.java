/*
 * Battleship client
 * (c) Programming project team. All rights reserved.
 * Redistribution requires the written permission of the authors.
 */

package pp.battleship;

/** Holds the audio related user settings. */
public record AudioSettings(boolean effectsEnabled, float effectsVolume) {
    public AudioSettings {
        if (effectsVolume < 0f || effectsVolume > 1f)
            throw new IllegalArgumentException("volume out of range");
    }

    public AudioSettings withEffects(boolean enabled) {
        return new AudioSettings(enabled, effectsVolume);
    }

    public static AudioSettings defaults() {
        return new AudioSettings(true, 1f);
    }
}
