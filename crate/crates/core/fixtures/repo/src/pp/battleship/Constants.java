package pp.battleship;

/**
 * Shared constants of the client.
 */
public interface Constants {
    float FIELD_SIZE = 1f;
    int MAP_WIDTH = 10;
    int MAP_HEIGHT = 10;
    String SOUND_PREFERENCE = "sound.enabled";
}
